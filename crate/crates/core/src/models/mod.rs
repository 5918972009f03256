//! Classifier families, the serialized model artifact, grid search and
//! threshold selection.
//!
//! Every family is fitted on a fully observed, already scaled matrix and
//! returns a [`ModelArtifact`]. The artifact carries the per-feature fill and
//! scaling transforms, so it can score raw (encoded but unscaled) rows.

mod gbdt;
mod gnb;
mod grid;
mod logistic;
mod mlp;
mod threshold;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gbdt::{fit_gbdt, GbdtParams};
pub use gnb::{fit_gnb, GnbParams};
pub use grid::{default_grid, grid_search, GridResult, GridRow, HyperGrid, HyperValue};
pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LogisticParams, Penalty};
pub use mlp::{fit_mlp, mlp_loss_and_grad, MlpParams, MlpWeights};
pub use threshold::{choose_threshold, sensitivity_at};

use crate::dataio::ColumnKind;
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig};
use crate::matrix::FeatureMatrix;
use crate::preprocess::Affine;
use crate::tree::Tree;

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    Gnb,
    Forest,
    Gbdt,
    Mlp,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Logistic, Family::Gnb, Family::Forest, Family::Gbdt, Family::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::Gnb => "gnb",
            Family::Forest => "forest",
            Family::Gbdt => "gbdt",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_leaf: 1,
        }
    }
}

/// A family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Logistic(LogisticParams),
    Gnb(GnbParams),
    Forest(ForestParams),
    Gbdt(GbdtParams),
    Mlp(MlpParams),
}

fn depth_value(d: Option<usize>) -> HyperValue {
    match d {
        Some(d) => HyperValue::Num(d as f64),
        None => HyperValue::Text("unlimited".into()),
    }
}

impl ModelSpec {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Logistic => ModelSpec::Logistic(LogisticParams::default()),
            Family::Gnb => ModelSpec::Gnb(GnbParams::default()),
            Family::Forest => ModelSpec::Forest(ForestParams::default()),
            Family::Gbdt => ModelSpec::Gbdt(GbdtParams::default()),
            Family::Mlp => ModelSpec::Mlp(MlpParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelSpec::Logistic(_) => Family::Logistic,
            ModelSpec::Gnb(_) => Family::Gnb,
            ModelSpec::Forest(_) => Family::Forest,
            ModelSpec::Gbdt(_) => Family::Gbdt,
            ModelSpec::Mlp(_) => Family::Mlp,
        }
    }

    /// Starts from the family defaults and overrides the given keys.
    pub fn from_assignment(family: Family, values: &BTreeMap<String, HyperValue>) -> Result<Self> {
        let mut spec = Self::default_for(family);
        for (key, v) in values {
            spec.set(key, v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn set(&mut self, key: &str, v: &HyperValue) -> Result<()> {
        let family = self.family();
        let unknown = || Error::invalid(format!("unknown hyperparameter {key:?} for {family}"));
        match self {
            ModelSpec::Logistic(p) => match key {
                "penalty" => p.penalty = v.as_text()?.parse()?,
                "c" => p.c = v.as_num()?,
                "tol" => p.tol = v.as_num()?,
                "max_iter" => p.max_iter = v.as_count()?,
                _ => return Err(unknown()),
            },
            ModelSpec::Gnb(p) => match key {
                "var_smoothing" => p.var_smoothing = v.as_num()?,
                _ => return Err(unknown()),
            },
            ModelSpec::Forest(p) => match key {
                "n_trees" => p.n_trees = v.as_count()?,
                "max_depth" => p.max_depth = v.as_depth()?,
                "min_leaf" => p.min_leaf = v.as_count()?,
                _ => return Err(unknown()),
            },
            ModelSpec::Gbdt(p) => match key {
                "n_iters" => p.n_iters = v.as_count()?,
                "learning_rate" => p.learning_rate = v.as_num()?,
                "max_depth" => p.max_depth = v.as_count()?,
                "min_leaf" => p.min_leaf = v.as_num()?,
                "subsample" => p.subsample = v.as_num()?,
                "l2_leaf" => p.l2_leaf = v.as_num()?,
                _ => return Err(unknown()),
            },
            ModelSpec::Mlp(p) => match key {
                "hidden_units" => p.hidden_units = v.as_count()?,
                "learning_rate" => p.learning_rate = v.as_num()?,
                "batch_size" => p.batch_size = v.as_count()?,
                "epochs" => p.epochs = v.as_count()?,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("{}: {m}", self.family())));
        match self {
            ModelSpec::Logistic(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) {
                    return bad("c must be positive");
                }
                if !(p.tol > 0.0) || p.max_iter == 0 {
                    return bad("tol and max_iter must be positive");
                }
            }
            ModelSpec::Gnb(p) => {
                if !(p.var_smoothing > 0.0) {
                    return bad("var_smoothing must be positive");
                }
            }
            ModelSpec::Forest(p) => {
                if p.n_trees == 0 || p.min_leaf == 0 || p.max_depth == Some(0) {
                    return bad("n_trees, min_leaf and max_depth must be positive");
                }
            }
            ModelSpec::Gbdt(p) => {
                if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
                    return bad("learning_rate must be positive");
                }
                if p.max_depth == 0 || !(p.min_leaf > 0.0) {
                    return bad("max_depth and min_leaf must be positive");
                }
                if !(p.subsample > 0.0 && p.subsample <= 1.0) {
                    return bad("subsample must be in (0, 1]");
                }
                if !(p.l2_leaf >= 0.0) {
                    return bad("l2_leaf must be non-negative");
                }
            }
            ModelSpec::Mlp(p) => {
                if p.hidden_units == 0 {
                    return bad("hidden_units must be at least 1");
                }
                if !(p.learning_rate > 0.0) || p.batch_size == 0 || p.epochs == 0 {
                    return bad("learning_rate, batch_size and epochs must be positive");
                }
            }
        }
        Ok(())
    }

    /// The hyperparameters as a name → value map (recorded in artifact meta).
    pub fn assignment(&self) -> BTreeMap<String, HyperValue> {
        use HyperValue::{Num, Text};
        let pairs: Vec<(&str, HyperValue)> = match self {
            ModelSpec::Logistic(p) => vec![
                ("penalty", Text(p.penalty.to_string())),
                ("c", Num(p.c)),
                ("tol", Num(p.tol)),
                ("max_iter", Num(p.max_iter as f64)),
            ],
            ModelSpec::Gnb(p) => vec![("var_smoothing", Num(p.var_smoothing))],
            ModelSpec::Forest(p) => vec![
                ("n_trees", Num(p.n_trees as f64)),
                ("max_depth", depth_value(p.max_depth)),
                ("min_leaf", Num(p.min_leaf as f64)),
            ],
            ModelSpec::Gbdt(p) => vec![
                ("n_iters", Num(p.n_iters as f64)),
                ("learning_rate", Num(p.learning_rate)),
                ("max_depth", Num(p.max_depth as f64)),
                ("min_leaf", Num(p.min_leaf)),
                ("subsample", Num(p.subsample)),
                ("l2_leaf", Num(p.l2_leaf)),
            ],
            ModelSpec::Mlp(p) => vec![
                ("hidden_units", Num(p.hidden_units as f64)),
                ("learning_rate", Num(p.learning_rate)),
                ("batch_size", Num(p.batch_size as f64)),
                ("epochs", Num(p.epochs as f64)),
            ],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Rough capacity measure used to break grid-search ties toward the
    /// simpler configuration.
    pub fn complexity(&self) -> f64 {
        match self {
            ModelSpec::Logistic(p) => p.c,
            ModelSpec::Gnb(_) => 0.0,
            ModelSpec::Forest(p) => p.n_trees as f64 * p.max_depth.map_or(1e6, |d| d as f64),
            ModelSpec::Gbdt(p) => p.n_iters as f64 * 2f64.powi(p.max_depth as i32),
            ModelSpec::Mlp(p) => (p.hidden_units * p.epochs) as f64,
        }
    }

    /// Fits on a fully observed (scaled) matrix.
    pub fn fit(&self, x: &FeatureMatrix, y: &[u8], seed: u64) -> Result<ModelArtifact> {
        self.validate()?;
        match self {
            ModelSpec::Logistic(p) => fit_logistic(x, y, p),
            ModelSpec::Gnb(p) => fit_gnb(x, y, p),
            ModelSpec::Forest(p) => fit_forest(x, y, p, seed),
            ModelSpec::Gbdt(p) => fit_gbdt(x, y, p, seed),
            ModelSpec::Mlp(p) => fit_mlp(x, y, p, seed),
        }
    }
}

/// Fitted parameters. `Constant` is used by any family trained on one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedParams {
    Constant {
        p: f64,
    },
    Logistic {
        weights: Vec<f64>,
        intercept: f64,
    },
    Gnb {
        log_prior: [f64; 2],
        mean: [Vec<f64>; 2],
        var: [Vec<f64>; 2],
    },
    Forest {
        trees: Vec<Tree>,
    },
    Gbdt {
        base_score: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
    Mlp(MlpWeights),
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl FittedParams {
    /// Input dimensionality, where the parameters fix it.
    pub fn n_inputs(&self) -> Option<usize> {
        match self {
            FittedParams::Logistic { weights, .. } => Some(weights.len()),
            FittedParams::Gnb { mean, .. } => Some(mean[0].len()),
            FittedParams::Mlp(w) => Some(w.d),
            _ => None,
        }
    }

    /// Probability of the positive class for one transformed row.
    pub fn predict_row(&self, z: &[f64]) -> f64 {
        let p = match self {
            FittedParams::Constant { p } => *p,
            FittedParams::Logistic { weights, intercept } => {
                sigmoid(weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + intercept)
            }
            FittedParams::Gnb { log_prior, mean, var } => gnb::posterior(log_prior, mean, var, z),
            FittedParams::Forest { trees } => {
                trees.iter().map(|t| t.predict(z)).sum::<f64>() / trees.len() as f64
            }
            FittedParams::Gbdt {
                base_score,
                learning_rate,
                trees,
            } => {
                let mut f = *base_score;
                for t in trees {
                    f += learning_rate * t.predict(z);
                }
                sigmoid(f)
            }
            FittedParams::Mlp(w) => sigmoid(w.logit(z)),
        };
        p.clamp(0.0, 1.0)
    }
}

/// Fill value for missing cells followed by `(v - offset) / scale` into model space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    #[serde(default)]
    pub fill: Option<f64>,
    pub offset: f64,
    pub scale: f64,
}

impl FeatureTransform {
    pub const IDENTITY: FeatureTransform = FeatureTransform {
        fill: None,
        offset: 0.0,
        scale: 1.0,
    };

    pub fn new(fill: Option<f64>, affine: Affine) -> Self {
        Self {
            fill,
            offset: affine.offset,
            scale: affine.scale,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        let v = if v.is_nan() { self.fill.unwrap_or(f64::NAN) } else { v };
        (v - self.offset) / self.scale
    }
}

/// Serving metadata for one input feature (raw units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
    pub range: [f64; 2],
    /// True when `range` comes from the schema rather than the training rows.
    #[serde(default)]
    pub declared: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub seed: u64,
    pub hyperparams: BTreeMap<String, HyperValue>,
    pub train_fingerprint: String,
    pub n_train: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    /// Per-iteration (gbdt) or per-epoch (mlp) training loss.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub version: u32,
    pub family: Family,
    pub params: FittedParams,
    pub feature_order: Vec<String>,
    pub transforms: Vec<FeatureTransform>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_info: Vec<FeatureInfo>,
    pub meta: ArtifactMeta,
}

impl ModelArtifact {
    pub(crate) fn new(family: Family, params: FittedParams, x: &FeatureMatrix, spec: &ModelSpec, seed: u64) -> Self {
        Self {
            version: ARTIFACT_VERSION,
            family,
            params,
            feature_order: x.names().to_vec(),
            transforms: vec![FeatureTransform::IDENTITY; x.n_cols()],
            threshold: 0.5,
            feature_info: Vec::new(),
            meta: ArtifactMeta {
                seed,
                hyperparams: spec.assignment(),
                train_fingerprint: x.fingerprint(),
                n_train: x.n_rows(),
                converged: true,
                flags: Vec::new(),
                loss_history: Vec::new(),
            },
        }
    }

    pub(crate) fn constant(family: Family, p: f64, x: &FeatureMatrix, spec: &ModelSpec, seed: u64) -> Self {
        let mut a = Self::new(family, FittedParams::Constant { p }, x, spec, seed);
        a.meta.flags.push("single_class_training_data".into());
        a
    }

    pub fn flagged(&self) -> bool {
        !self.meta.converged || !self.meta.flags.is_empty()
    }

    /// Checks internal consistency (dimensions, threshold, transforms).
    pub fn validate(&self) -> Result<()> {
        let d = self.feature_order.len();
        if self.transforms.len() != d {
            return Err(Error::invalid("transform count does not match feature_order"));
        }
        if let Some(k) = self.params.n_inputs() {
            if k != d {
                return Err(Error::invalid(format!(
                    "parameters expect {k} inputs but feature_order has {d}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold outside [0, 1]"));
        }
        Ok(())
    }

    fn check_columns(&self, names: &[String]) -> Result<()> {
        if names != self.feature_order.as_slice() {
            return Err(Error::FeatureMismatch {
                expected: self.feature_order.clone(),
                found: names.to_vec(),
            });
        }
        Ok(())
    }

    /// Scores one row given in `feature_order`, raw units.
    pub fn predict_one(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.feature_order.len() {
            return Err(Error::invalid(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.feature_order.len()
            )));
        }
        let z: Vec<f64> = row.iter().zip(&self.transforms).map(|(&v, t)| t.apply(v)).collect();
        if let Some(j) = z.iter().position(|v| v.is_nan()) {
            return Err(Error::invalid(format!(
                "missing value for {:?} and no fill is recorded",
                self.feature_order[j]
            )));
        }
        Ok(self.params.predict_row(&z))
    }

    /// Risk for every row of `x`, whose columns must equal `feature_order`.
    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x.names())?;
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| self.predict_one(x.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(s)?;
        let found = raw
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::Serde("artifact has no version field".into()))?;
        if found != u64::from(ARTIFACT_VERSION) {
            return Err(Error::Version {
                expected: ARTIFACT_VERSION,
                found: u32::try_from(found).unwrap_or(u32::MAX),
            });
        }
        let a: ModelArtifact = serde_json::from_value(raw)?;
        a.validate()?;
        Ok(a)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Anything that maps a feature matrix to risks in [0, 1].
pub trait RiskModel: Sync {
    fn feature_order(&self) -> &[String];
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;
}

impl RiskModel for ModelArtifact {
    fn feature_order(&self) -> &[String] {
        &self.feature_order
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        ModelArtifact::predict_proba(self, x)
    }
}

/// Wraps a row function as a [`RiskModel`].
pub struct FnModel<F> {
    names: Vec<String>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(names: Vec<String>, f: F) -> Self {
        Self { names, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> RiskModel for FnModel<F> {
    fn feature_order(&self) -> &[String] {
        &self.names
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        if x.names() != self.names.as_slice() {
            return Err(Error::FeatureMismatch {
                expected: self.names.clone(),
                found: x.names().to_vec(),
            });
        }
        Ok(x.rows().map(|r| (self.f)(r)).collect())
    }
}

pub(crate) fn check_training(x: &FeatureMatrix, y: &[u8]) -> Result<usize> {
    if x.n_rows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if y.len() != x.n_rows() {
        return Err(Error::invalid("labels and rows differ in length"));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training matrix must be fully observed and finite"));
    }
    Ok(y.iter().filter(|&&v| v == 1).count())
}

pub fn fit_forest(x: &FeatureMatrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<ModelArtifact> {
    let spec = ModelSpec::Forest(*params);
    spec.validate()?;
    let pos = check_training(x, y)?;
    if pos == 0 || pos == y.len() {
        return Ok(ModelArtifact::constant(Family::Forest, pos as f64 / y.len() as f64, x, &spec, seed));
    }
    let cfg = ForestConfig::classifier(params.n_trees, params.max_depth, params.min_leaf);
    let yf: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    let fitted = Forest::fit(x, &yf, &cfg, seed)?;
    Ok(ModelArtifact::new(
        Family::Forest,
        FittedParams::Forest {
            trees: fitted.forest.trees,
        },
        x,
        &spec,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn separable(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            rows.push(vec![a, b]);
            y.push(u8::from(a + b > 1.0));
        }
        (FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap(), y)
    }

    #[test]
    fn forest_separable_and_deterministic() {
        let (x, y) = separable(500, 1);
        let m = fit_forest(&x, &y, &ForestParams::default(), 9).unwrap();
        let p = m.predict_proba(&x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, &y)| (**p >= 0.5) == (y == 1)).count() as f64 / 500.0;
        assert!(acc >= 0.98, "{acc}");
        let again = fit_forest(&x, &y, &ForestParams::default(), 9).unwrap();
        assert_eq!(p, again.predict_proba(&x).unwrap());
    }

    #[test]
    fn forest_constant_labels() {
        let (x, _) = separable(20, 2);
        let m = fit_forest(&x, &[1; 20], &ForestParams::default(), 0).unwrap();
        assert!(m.flagged());
        assert!(m.predict_proba(&x).unwrap().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn column_mismatch_is_rejected() {
        let (x, y) = separable(50, 3);
        let m = fit_forest(&x, &y, &ForestParams { n_trees: 5, ..Default::default() }, 0).unwrap();
        let swapped = x.select_columns(&["b".into(), "a".into()]).unwrap();
        assert!(matches!(m.predict_proba(&swapped), Err(Error::FeatureMismatch { .. })));
    }

    #[test]
    fn artifact_json_round_trip_and_version_check() {
        let (x, y) = separable(80, 4);
        let m = fit_forest(&x, &y, &ForestParams { n_trees: 7, ..Default::default() }, 5).unwrap();
        let back = ModelArtifact::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let bumped = m.to_json().unwrap().replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(
            ModelArtifact::from_json(&bumped),
            Err(Error::Version { found: 99, .. })
        ));
    }

    #[test]
    fn spec_assignment_round_trip() {
        for fam in Family::ALL {
            let spec = ModelSpec::default_for(fam);
            assert_eq!(ModelSpec::from_assignment(fam, &spec.assignment()).unwrap(), spec);
        }
        let mut bad = BTreeMap::new();
        bad.insert("hidden_units".to_string(), HyperValue::Num(0.0));
        assert!(ModelSpec::from_assignment(Family::Mlp, &bad).is_err());
        bad.clear();
        bad.insert("depth".to_string(), HyperValue::Num(3.0));
        assert!(ModelSpec::from_assignment(Family::Gbdt, &bad).is_err());
    }

    #[test]
    fn transforms_fill_then_scale() {
        let t = FeatureTransform {
            fill: Some(4.0),
            offset: 2.0,
            scale: 0.5,
        };
        assert_eq!(t.apply(f64::NAN), 4.0);
        assert_eq!(t.apply(6.0), 8.0);
        let a = crate::preprocess::fit_minmax(&[3.0, 7.0, 11.0]);
        let t = FeatureTransform::new(None, a);
        for v in [3.0, 5.0, 11.0, 13.0] {
            assert_eq!(t.apply(v), a.apply(v));
        }
    }
}
