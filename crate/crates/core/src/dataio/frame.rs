use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Integer-valued clinical score with a declared range (GCS, Braden, APS III).
    Score,
    Categorical,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Continuous | ColumnKind::Score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
    /// Declared valid range; required in spirit for score columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
            unit: String::new(),
            range: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = unit.into();
        self
    }

    pub fn with_range(mut self, lo: f64, hi: f64) -> Self {
        self.range = Some([lo, hi]);
        self
    }
}

/// Column layout of a CSV file, stored as a TOML sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub spec: ColumnSpec,
    /// Numeric cell values; categorical cells hold an index into `levels`.
    /// Missing cells are NaN.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
    pub levels: Vec<String>,
}

impl Column {
    pub fn numeric(spec: ColumnSpec, values: Vec<f64>) -> Self {
        let missing = values.iter().map(|v| v.is_nan()).collect();
        Self {
            spec,
            values,
            missing,
            levels: Vec::new(),
        }
    }

    pub fn categorical(spec: ColumnSpec, cells: &[Option<&str>]) -> Self {
        let mut levels: Vec<String> = Vec::new();
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for cell in cells {
            match cell {
                Some(s) => {
                    let idx = match levels.iter().position(|l| l == s) {
                        Some(i) => i,
                        None => {
                            levels.push((*s).to_string());
                            levels.len() - 1
                        }
                    };
                    values.push(idx as f64);
                    missing.push(false);
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Self {
            spec,
            values,
            missing,
            levels,
        }
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.spec.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.n_missing() as f64 / self.len() as f64
        }
    }

    pub fn observed(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(&self.missing)
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            spec: self.spec.clone(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            missing: idx.iter().map(|&i| self.missing[i]).collect(),
            levels: self.levels.clone(),
        }
    }
}

/// Column-typed table with a per-cell missingness mask and an optional
/// binary label column (1 = died within 28 days).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    columns: Vec<Column>,
    n_rows: usize,
    label: Option<String>,
}

impl Frame {
    pub fn new(columns: Vec<Column>, label: Option<String>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Column::len);
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name().to_string()) {
                return Err(Error::invalid(format!("duplicate column name {:?}", c.name())));
            }
            if c.len() != n_rows || c.missing.len() != n_rows {
                return Err(Error::invalid(format!(
                    "column {:?} has {} rows, expected {n_rows}",
                    c.name(),
                    c.len()
                )));
            }
            for (i, (&v, &m)) in c.values.iter().zip(&c.missing).enumerate() {
                if m {
                    continue;
                }
                if v.is_nan() {
                    return Err(Error::invalid(format!(
                        "column {:?} row {i}: NaN in a cell not marked missing",
                        c.name()
                    )));
                }
                if c.kind() == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::invalid(format!(
                        "binary column {:?} row {i} holds {v}",
                        c.name()
                    )));
                }
            }
        }
        if let Some(l) = &label {
            let col = columns
                .iter()
                .find(|c| c.name() == l)
                .ok_or_else(|| Error::invalid(format!("label column {l:?} not present")))?;
            if col.kind() != ColumnKind::Binary {
                return Err(Error::invalid(format!("label column {l:?} must be binary")));
            }
            if col.n_missing() > 0 {
                return Err(Error::invalid(format!("label column {l:?} has missing values")));
            }
        }
        Ok(Self {
            columns,
            n_rows,
            label,
        })
    }

    /// Builds a fully-observed frame from a numeric matrix plus labels.
    pub fn from_matrix(
        matrix: &FeatureMatrix,
        specs: &[ColumnSpec],
        labels: Option<(&str, &[u8])>,
    ) -> Result<Self> {
        let mut columns = Vec::with_capacity(specs.len() + 1);
        for spec in specs {
            let j = matrix
                .column_index(&spec.name)
                .ok_or_else(|| Error::invalid(format!("matrix lacks column {:?}", spec.name)))?;
            columns.push(Column::numeric(spec.clone(), matrix.column(j)));
        }
        let label = match labels {
            Some((name, y)) => {
                columns.push(Column::numeric(
                    ColumnSpec::new(name, ColumnKind::Binary),
                    y.iter().map(|&v| v as f64).collect(),
                ));
                Some(name.to_string())
            }
            None => None,
        };
        Self::new(columns, label)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn schema(&self) -> Schema {
        Schema {
            label: self.label.clone(),
            columns: self.columns.iter().map(|c| c.spec.clone()).collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn column_mut(&mut self, name: &str) -> Option<&mut Column> {
        self.columns.iter_mut().find(|c| c.name() == name)
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::invalid(format!("unknown column {name:?}")))
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn labels(&self) -> Result<Vec<u8>> {
        let name = self
            .label
            .as_deref()
            .ok_or_else(|| Error::invalid("frame has no label column"))?;
        Ok(self.require(name)?.values.iter().map(|&v| v as u8).collect())
    }

    pub fn prevalence(&self) -> Result<f64> {
        let y = self.labels()?;
        if y.is_empty() {
            return Err(Error::Empty("frame has no rows".into()));
        }
        Ok(y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64)
    }

    /// Names of all non-label columns, in schema order.
    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| Some(c.name()) != self.label.as_deref())
            .map(|c| c.name().to_string())
            .collect()
    }

    pub fn feature_specs(&self) -> Vec<ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| Some(c.name()) != self.label.as_deref())
            .map(|c| c.spec.clone())
            .collect()
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(|c| c.n_missing() > 0)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
            n_rows: idx.len(),
            label: self.label.clone(),
        }
    }

    /// Keeps the named feature columns (in the given order) plus the label.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let mut columns = Vec::with_capacity(names.len() + 1);
        for n in names {
            columns.push(self.require(n)?.clone());
        }
        if let Some(l) = &self.label {
            if !names.contains(l) {
                columns.push(self.require(l)?.clone());
            }
        }
        Self::new(columns, self.label.clone())
    }

    /// Numeric matrix over `names`; missing cells become NaN.
    pub fn matrix(&self, names: &[String]) -> Result<FeatureMatrix> {
        let cols: Vec<Vec<f64>> = names
            .iter()
            .map(|n| self.require(n).map(|c| c.values.clone()))
            .collect::<Result<_>>()?;
        FeatureMatrix::from_columns(names.to_vec(), &cols)
    }

    pub fn feature_matrix(&self) -> Result<FeatureMatrix> {
        self.matrix(&self.feature_names())
    }

    /// Replaces the cells of an existing column, recomputing its mask.
    pub fn replace_values(&mut self, name: &str, values: Vec<f64>) -> Result<()> {
        let n = self.n_rows;
        let col = self
            .column_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown column {name:?}")))?;
        if values.len() != n {
            return Err(Error::invalid("replacement column has wrong length"));
        }
        col.missing = values.iter().map(|v| v.is_nan()).collect();
        col.values = values;
        Ok(())
    }

    /// Row-order-sensitive fingerprint of every cell, used for audit trails
    /// and leakage checks.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update(c.name().as_bytes());
            for (&v, &m) in c.values.iter().zip(&c.missing) {
                if m {
                    h.update([0xff]);
                } else {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        let digest = h.finalize();
        digest[..12].iter().map(|b| format!("{b:02x}")).collect()
    }
}
