//! SMOTE oversampling, stratified k-fold plans and fold-safe cross-validation.
//!
//! Everything learned from data (fills, encoders, scaling, synthetic rows,
//! model parameters) is fitted on the training folds only. A [`FoldRecipe`]
//! sees the data through [`FoldData`], which refuses to hand out held-out rows.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{ColumnKind, Frame};
use crate::error::{Error, Result};
use crate::evalstats::{evaluate, EvalReport};
use crate::matrix::FeatureMatrix;
use crate::models::{FeatureInfo, FeatureTransform, ModelArtifact, ModelSpec};
use crate::preprocess::{FittedPreprocessor, PreprocessConfig};
use crate::seed;

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: DEFAULT_K_NEIGHBORS,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Generates `n_synthetic` rows by interpolating between a randomly chosen
/// minority row and one of its `k_neighbors` nearest minority neighbors
/// (Euclidean, exact duplicates skipped). `k_neighbors` is capped at
/// `rows - 1`. Columns listed in `binary` are rounded back to 0/1.
pub fn smote(
    minority: &FeatureMatrix,
    k_neighbors: usize,
    n_synthetic: usize,
    binary: &[usize],
    seed_v: u64,
) -> Result<FeatureMatrix> {
    let n = minority.n_rows();
    if n < 2 {
        return Err(Error::degenerate(format!(
            "SMOTE needs at least 2 minority rows, got {n}"
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    if minority.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("SMOTE needs fully observed, finite rows"));
    }
    let k = k_neighbors.min(n - 1);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = minority.row(i);
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(xi, minority.row(j)), j))
                .filter(|&(d, _)| d > 0.0)
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();
    let bases: Vec<usize> = (0..n).filter(|&i| !neighbors[i].is_empty()).collect();
    if bases.is_empty() && n_synthetic > 0 {
        return Err(Error::degenerate("all minority rows are identical"));
    }

    let mut rng = seed::rng(seed_v);
    let mut out = FeatureMatrix::new(minority.names().to_vec(), 0, Vec::new())?;
    let mut row = vec![0.0; minority.n_cols()];
    for _ in 0..n_synthetic {
        let i = bases[rng.random_range(0..bases.len())];
        let nb = &neighbors[i];
        let j = nb[rng.random_range(0..nb.len())];
        let lambda = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        let (xi, xj) = (minority.row(i), minority.row(j));
        for c in 0..row.len() {
            row[c] = xi[c] + lambda * (xj[c] - xi[c]);
        }
        for &c in binary {
            row[c] = if row[c] >= 0.5 { 1.0 } else { 0.0 };
        }
        out.push_row(&row);
    }
    Ok(out)
}

/// Appends synthetic minority rows until both classes have equal counts.
pub fn smote_balance(
    x: &FeatureMatrix,
    y: &[u8],
    k_neighbors: usize,
    binary: &[usize],
    seed_v: u64,
) -> Result<(FeatureMatrix, Vec<u8>)> {
    if y.len() != x.n_rows() {
        return Err(Error::invalid("labels and rows differ in length"));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.len() - pos;
    if pos == neg {
        return Ok((x.clone(), y.to_vec()));
    }
    let minority_class = u8::from(pos < neg);
    let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_class).collect();
    let synth = smote(&x.select_rows(&idx), k_neighbors, pos.abs_diff(neg), binary, seed_v)?;
    let mut xb = x.clone();
    let mut yb = y.to_vec();
    for r in synth.rows() {
        xb.push_row(r);
        yb.push(minority_class);
    }
    Ok((xb, yb))
}

/// A partition of row indices into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn n_rows(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Checks that the folds partition `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.folds.len() != self.k || self.k < 2 {
            return Err(Error::invalid("fold plan must hold k >= 2 folds"));
        }
        let mut seen = vec![false; n];
        for &i in self.folds.iter().flatten() {
            if i >= n || seen[i] {
                return Err(Error::invalid(format!("fold plan index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::invalid("fold plan does not cover every row"));
        }
        Ok(())
    }

    /// Rows outside fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }

    /// One line per fold: `fold<TAB>space-separated row indices`.
    pub fn to_text(&self) -> String {
        let mut s = format!("# k={} seed={} rows={}\n", self.k, self.seed, self.n_rows());
        for (f, rows) in self.folds.iter().enumerate() {
            let list: Vec<String> = rows.iter().map(ToString::to_string).collect();
            let _ = writeln!(s, "{f}\t{}", list.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seed_v = 0;
        let mut folds = Vec::new();
        for line in text.lines() {
            if let Some(header) = line.strip_prefix('#') {
                for tok in header.split_whitespace() {
                    if let Some(v) = tok.strip_prefix("seed=") {
                        seed_v = v.parse().map_err(|_| Error::invalid("bad seed in fold plan"))?;
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (f, rest) = line
                .split_once('\t')
                .ok_or_else(|| Error::invalid(format!("bad fold plan line {line:?}")))?;
            if f.parse::<usize>().ok() != Some(folds.len()) {
                return Err(Error::invalid("fold plan lines out of order"));
            }
            let rows = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>().map_err(|_| Error::invalid(format!("bad row index {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            folds.push(rows);
        }
        let plan = FoldPlan {
            k: folds.len(),
            folds,
            seed: seed_v,
        };
        plan.validate(plan.n_rows())?;
        Ok(plan)
    }
}

/// Shuffles each class and deals its members round-robin, positives first,
/// negatives continuing where the positives stopped. Per-fold class counts
/// and fold sizes each differ by at most one.
pub fn stratified_kfold(labels: &[u8], k: usize, seed_v: u64) -> Result<FoldPlan> {
    use rand::seq::SliceRandom;
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    let mut rng = seed::rng(seed_v);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [1u8, 0] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::degenerate(format!(
                "class {class} has {} rows, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldPlan { k, folds, seed: seed_v })
}

/// The training side of one fold.
pub struct FoldData<'a> {
    frame: &'a Frame,
    held_out: BTreeSet<usize>,
    train_rows: Vec<usize>,
    train: Frame,
}

impl<'a> FoldData<'a> {
    pub fn new(frame: &'a Frame, train_rows: Vec<usize>, held_out: &[usize]) -> Result<Self> {
        let held: BTreeSet<usize> = held_out.iter().copied().collect();
        if let Some(i) = train_rows.iter().find(|i| held.contains(i)) {
            return Err(Error::Leakage(format!("row {i} is both training and held-out")));
        }
        let train = frame.select_rows(&train_rows);
        Ok(Self {
            frame,
            held_out: held,
            train_rows,
            train,
        })
    }

    /// Training rows only.
    pub fn train(&self) -> &Frame {
        &self.train
    }

    pub fn train_rows(&self) -> &[usize] {
        &self.train_rows
    }

    /// Rows of the full frame by index; asking for a held-out row fails.
    pub fn rows(&self, idx: &[usize]) -> Result<Frame> {
        if let Some(i) = idx.iter().find(|i| self.held_out.contains(i)) {
            return Err(Error::Leakage(format!("recipe requested held-out row {i}")));
        }
        if let Some(i) = idx.iter().find(|&&i| i >= self.frame.n_rows()) {
            return Err(Error::invalid(format!("row {i} out of range")));
        }
        Ok(self.frame.select_rows(idx))
    }
}

/// Fitted preprocessing plus model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub preprocessor: FittedPreprocessor,
    pub model: ModelArtifact,
}

impl FittedPipeline {
    /// Encodes `frame` and scores it; imputation and scaling happen in the model.
    pub fn predict_frame(&self, frame: &Frame) -> Result<Vec<f64>> {
        let prepared = self.preprocessor.prepare(frame)?;
        let x = prepared.matrix(&self.model.feature_order)?;
        self.model.predict_proba(&x)
    }
}

/// Anything that can turn a fold's training data into a fitted pipeline.
pub trait FoldRecipe: Sync {
    fn fit_fold(&self, data: &FoldData<'_>, seed: u64) -> Result<FittedPipeline>;
}

/// Preprocess, scale, optionally SMOTE, then fit one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub features: Vec<String>,
    pub preprocess: PreprocessConfig,
    pub smote: Option<SmoteConfig>,
    pub model: ModelSpec,
}

impl Recipe {
    pub fn new(features: Vec<String>, model: ModelSpec) -> Self {
        Self {
            features,
            preprocess: PreprocessConfig::default(),
            smote: Some(SmoteConfig::default()),
            model,
        }
    }

    /// Fits every stage on `train`.
    pub fn fit(&self, train: &Frame, seed_v: u64) -> Result<FittedPipeline> {
        if self.features.is_empty() {
            return Err(Error::invalid("recipe has no features"));
        }
        let (pre, prepared) =
            FittedPreprocessor::fit(train, &self.features, &self.preprocess, seed::derive_seed(seed_v, "impute"))?;
        let mut x = prepared.matrix(&self.features)?;
        for (j, name) in self.features.iter().enumerate() {
            let affine = pre.scaling[name];
            for i in 0..x.n_rows() {
                x.set(i, j, affine.apply(x.get(i, j)));
            }
        }
        let y = prepared.labels()?;
        let binary: Vec<usize> = self
            .features
            .iter()
            .enumerate()
            .filter(|(_, n)| prepared.column(n).is_some_and(|c| c.kind() == ColumnKind::Binary))
            .map(|(j, _)| j)
            .collect();
        let (x, y) = match self.smote {
            Some(cfg) => smote_balance(&x, &y, cfg.k_neighbors, &binary, seed::derive_seed(seed_v, "smote"))?,
            None => (x, y),
        };
        let mut model = self.model.fit(&x, &y, seed::derive_seed(seed_v, "model"))?;
        model.transforms = self
            .features
            .iter()
            .map(|n| FeatureTransform::new(pre.fills.get(n).copied(), pre.scaling[n]))
            .collect();
        model.feature_info = self
            .features
            .iter()
            .map(|n| {
                let col = prepared.require(n)?;
                let range = col.spec.range.unwrap_or_else(|| {
                    let lo = col.values.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = col.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    [lo, hi]
                });
                Ok(FeatureInfo {
                    name: n.clone(),
                    kind: col.kind(),
                    unit: col.spec.unit.clone(),
                    range,
                    declared: col.spec.range.is_some(),
                })
            })
            .collect::<Result<_>>()?;
        model.meta.seed = seed_v;
        model.meta.train_fingerprint = train.fingerprint();
        model.meta.n_train = train.n_rows();
        Ok(FittedPipeline {
            preprocessor: pre,
            model,
        })
    }
}

impl FoldRecipe for Recipe {
    fn fit_fold(&self, data: &FoldData<'_>, seed_v: u64) -> Result<FittedPipeline> {
        self.fit(data.train(), seed_v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub held_out: Vec<usize>,
    pub probs: Vec<f64>,
    pub report: EvalReport,
}

/// Fits `recipe` on each fold's training rows and scores the untouched
/// held-out rows at the model's threshold.
pub fn cv_train_eval<R: FoldRecipe + ?Sized>(
    frame: &Frame,
    plan: &FoldPlan,
    recipe: &R,
    seed_v: u64,
) -> Result<Vec<FoldOutcome>> {
    plan.validate(frame.n_rows())?;
    let labels = frame.labels()?;
    (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let held = &plan.folds[f];
            let data = FoldData::new(frame, plan.train_rows(f), held)?;
            let pipeline = recipe.fit_fold(&data, seed::derive_indexed(seed_v, "cv-fold", f as u64))?;
            let probs = pipeline.predict_frame(&frame.select_rows(held))?;
            let y: Vec<u8> = held.iter().map(|&i| labels[i]).collect();
            let report = evaluate(&probs, &y, pipeline.model.threshold, None)?;
            Ok(FoldOutcome {
                fold: f,
                held_out: held.clone(),
                probs,
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smote_on_a_segment() {
        let m = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let s = smote(&m, 1, 1000, &[], 3).unwrap();
        assert_eq!(s.n_rows(), 1000);
        for r in s.rows() {
            assert!((r[0] - r[1]).abs() <= 1e-12);
            assert!(r[0] > 0.0 && r[0] < 1.0);
        }
        assert_eq!(s, smote(&m, 1, 1000, &[], 3).unwrap());
    }

    #[test]
    fn smote_needs_two_rows() {
        let m = FeatureMatrix::from_rows(vec!["a".into()], &[vec![0.0]]).unwrap();
        assert!(smote(&m, 5, 3, &[], 0).is_err());
    }

    #[test]
    fn smote_binary_columns_stay_binary() {
        let m = FeatureMatrix::from_rows(
            vec!["a".into(), "flag".into()],
            &[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 1.0]],
        )
        .unwrap();
        let s = smote(&m, 2, 200, &[1], 1).unwrap();
        assert!(s.column(1).iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn balance_equalizes_counts() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &rows).unwrap();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 5 == 0)).collect();
        let (xb, yb) = smote_balance(&x, &y, 5, &[], 2).unwrap();
        let pos = yb.iter().filter(|&&v| v == 1).count();
        assert_eq!(pos, yb.len() - pos);
        assert_eq!(xb.n_rows(), yb.len());
        assert_eq!(xb.select_rows(&(0..30).collect::<Vec<_>>()), x);
    }

    #[test]
    fn kfold_examples() {
        let y: Vec<u8> = (0..100).map(|i| u8::from(i < 20)).collect();
        let plan = stratified_kfold(&y, 5, 1).unwrap();
        plan.validate(100).unwrap();
        for f in &plan.folds {
            assert_eq!(f.iter().filter(|&&i| y[i] == 1).count(), 4);
            assert_eq!(f.len(), 20);
        }
        let y = [1, 1, 1, 0, 0, 0, 0];
        let plan = stratified_kfold(&y, 2, 1).unwrap();
        let mut counts: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| y[i] == 1).count()).collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![1, 2]);
        assert!(stratified_kfold(&[1, 0, 0, 0], 2, 0).is_err());
    }

    #[test]
    fn fold_plan_text_round_trip() {
        let y: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let plan = stratified_kfold(&y, 3, 77).unwrap();
        assert_eq!(FoldPlan::from_text(&plan.to_text()).unwrap(), plan);
        assert_eq!(plan, stratified_kfold(&y, 3, 77).unwrap());
    }
}
