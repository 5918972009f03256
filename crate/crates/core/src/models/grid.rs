use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Family, ModelSpec};
use crate::balance::{cv_train_eval, FoldPlan, Recipe};
use crate::dataio::Frame;
use crate::error::{Error, Result};

/// A hyperparameter value: a number, or a word such as `"l1"` or `"unlimited"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Num(f64),
    Text(String),
}

impl HyperValue {
    pub fn as_num(&self) -> Result<f64> {
        match self {
            HyperValue::Num(v) => Ok(*v),
            HyperValue::Text(s) => Err(Error::invalid(format!("expected a number, got {s:?}"))),
        }
    }

    pub fn as_count(&self) -> Result<usize> {
        let v = self.as_num()?;
        if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
            Ok(v as usize)
        } else {
            Err(Error::invalid(format!("expected a non-negative integer, got {v}")))
        }
    }

    pub fn as_text(&self) -> Result<&str> {
        match self {
            HyperValue::Text(s) => Ok(s),
            HyperValue::Num(v) => Err(Error::invalid(format!("expected a word, got {v}"))),
        }
    }

    /// A depth limit: an integer, or `"unlimited"` / `"none"`.
    pub fn as_depth(&self) -> Result<Option<usize>> {
        match self {
            HyperValue::Text(s) if s == "unlimited" || s == "none" => Ok(None),
            other => other.as_count().map(Some),
        }
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Num(v) => write!(f, "{v}"),
            HyperValue::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Num(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub family: Family,
    pub axes: BTreeMap<String, Vec<HyperValue>>,
}

impl HyperGrid {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            axes: BTreeMap::new(),
        }
    }

    pub fn axis(mut self, name: &str, values: Vec<HyperValue>) -> Self {
        self.axes.insert(name.to_string(), values);
        self
    }

    /// Every point of the lattice, axes varying in name order with the last
    /// axis fastest.
    pub fn lattice(&self) -> Result<Vec<BTreeMap<String, HyperValue>>> {
        if self.axes.values().any(Vec::is_empty) {
            return Err(Error::invalid(format!("{} grid has an empty axis", self.family)));
        }
        let mut points = vec![BTreeMap::new()];
        for (name, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }

    /// Checks that every lattice point is a valid configuration.
    pub fn validate(&self) -> Result<()> {
        for p in self.lattice()? {
            ModelSpec::from_assignment(self.family, &p)?;
        }
        Ok(())
    }
}

/// Default search space per family.
pub fn default_grid(family: Family) -> HyperGrid {
    let nums = |v: &[f64]| v.iter().map(|&x| HyperValue::Num(x)).collect::<Vec<_>>();
    let g = HyperGrid::new(family);
    match family {
        Family::Logistic => g
            .axis("penalty", vec!["l1".into(), "l2".into()])
            .axis("c", nums(&[0.01, 0.1, 1.0, 10.0])),
        Family::Gnb => g.axis("var_smoothing", nums(&[1e-9])),
        Family::Forest => g
            .axis("n_trees", nums(&[200.0]))
            .axis("max_depth", vec!["unlimited".into(), HyperValue::Num(8.0)]),
        Family::Gbdt => g
            .axis("learning_rate", nums(&[0.05, 0.1]))
            .axis("max_depth", nums(&[3.0, 4.0, 6.0]))
            .axis("n_iters", nums(&[200.0, 400.0])),
        Family::Mlp => g.axis("hidden_units", nums(&[16.0, 32.0])),
    }
}

fn label(p: &BTreeMap<String, HyperValue>) -> String {
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub params: BTreeMap<String, HyperValue>,
    pub fold_auroc: Vec<f64>,
    pub mean_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub family: Family,
    pub best: BTreeMap<String, HyperValue>,
    pub best_spec: ModelSpec,
    /// One row per lattice point, in lattice order.
    pub table: Vec<GridRow>,
}

/// Exhaustive search scored by mean held-out-fold AUROC. `recipe` supplies
/// the features, preprocessing and resampling; its model is replaced by each
/// lattice point in turn. Ties go to the lower [`ModelSpec::complexity`], then
/// to the lexicographically smaller `key=value` label.
pub fn grid_search(frame: &Frame, recipe: &Recipe, grid: &HyperGrid, plan: &FoldPlan, seed: u64) -> Result<GridResult> {
    let points = grid.lattice()?;
    let specs: Vec<ModelSpec> = points
        .iter()
        .map(|p| ModelSpec::from_assignment(grid.family, p))
        .collect::<Result<_>>()?;
    let table: Vec<GridRow> = points
        .par_iter()
        .zip(specs.par_iter())
        .map(|(p, spec)| {
            let r = Recipe {
                model: *spec,
                ..recipe.clone()
            };
            let folds = cv_train_eval(frame, plan, &r, seed)?;
            let fold_auroc: Vec<f64> = folds.iter().map(|f| f.report.auroc).collect();
            let mean_auroc = fold_auroc.iter().sum::<f64>() / fold_auroc.len() as f64;
            Ok(GridRow {
                params: p.clone(),
                fold_auroc,
                mean_auroc,
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..table.len())
        .min_by(|&a, &b| {
            table[b]
                .mean_auroc
                .total_cmp(&table[a].mean_auroc)
                .then(specs[a].complexity().total_cmp(&specs[b].complexity()))
                .then_with(|| label(&points[a]).cmp(&label(&points[b])))
        })
        .expect("lattice is never empty");
    Ok(GridResult {
        family: grid.family,
        best: points[best].clone(),
        best_spec: specs[best],
        table,
    })
}
