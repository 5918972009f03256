use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{ColumnKind, Frame};
use crate::error::{Error, Result};
use crate::forest::{Forest, ForestConfig, RowSampling};
use crate::matrix::FeatureMatrix;
use crate::seed;
use crate::stats;
use crate::tree::{Criterion, MaxFeatures, TreeParams};

/// Median of observed cells (numeric kinds) or mode (binary / categorical;
/// ties go to the smallest code).
fn fill_value(kind: ColumnKind, observed: &[f64]) -> f64 {
    match kind {
        ColumnKind::Continuous | ColumnKind::Score => stats::median(observed),
        ColumnKind::Binary | ColumnKind::Categorical => {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for &v in observed {
                *counts.entry(v as i64).or_default() += 1;
            }
            let mut best = (0i64, 0usize);
            for (&k, &c) in &counts {
                if c > best.1 {
                    best = (k, c);
                }
            }
            best.0 as f64
        }
    }
}

/// Per-column fill values learned from one frame and applied to another.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MedianModeImputer {
    pub fills: BTreeMap<String, f64>,
}

impl MedianModeImputer {
    pub fn fit(frame: &Frame) -> Result<Self> {
        let mut fills = BTreeMap::new();
        for col in frame.columns() {
            if Some(col.name()) == frame.label_name() {
                continue;
            }
            let observed = col.observed();
            if observed.is_empty() {
                return Err(Error::degenerate(format!(
                    "column {:?} has no observed values to impute from",
                    col.name()
                )));
            }
            fills.insert(col.name().to_string(), fill_value(col.kind(), &observed));
        }
        Ok(Self { fills })
    }

    pub fn transform(&self, frame: &Frame) -> Result<Frame> {
        let mut out = frame.clone();
        for col in frame.columns() {
            if col.n_missing() == 0 {
                continue;
            }
            let fill = *self.fills.get(col.name()).ok_or_else(|| {
                Error::invalid(format!("no fill value learned for column {:?}", col.name()))
            })?;
            let values = col
                .values
                .iter()
                .zip(&col.missing)
                .map(|(&v, &m)| if m { fill } else { v })
                .collect();
            out.replace_values(col.name(), values)?;
        }
        Ok(out)
    }
}

pub fn impute_median_mode(frame: &Frame) -> Result<Frame> {
    MedianModeImputer::fit(frame)?.transform(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterativeForestConfig {
    pub max_iter: usize,
    /// Stop once the mean absolute change of imputed numeric cells is at
    /// most this.
    pub tol: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub subsample: f64,
}

impl Default for IterativeForestConfig {
    fn default() -> Self {
        Self {
            max_iter: 10,
            tol: 1e-3,
            n_trees: 25,
            max_depth: 8,
            subsample: 0.8,
        }
    }
}

/// Iterative forest imputation: start from median/mode fills, then cycle
/// through incomplete columns in order of increasing missingness, refitting a
/// forest on each column's observed rows and re-predicting its missing cells.
pub fn impute_iterative_forest(frame: &Frame, config: &IterativeForestConfig, seed: u64) -> Result<Frame> {
    let features = frame.feature_names();
    let cols: Vec<&crate::dataio::Column> = features
        .iter()
        .map(|n| frame.require(n))
        .collect::<Result<_>>()?;
    if cols.iter().all(|c| c.n_missing() == 0) {
        return Ok(frame.clone());
    }
    if !cols.iter().any(|c| c.n_missing() == 0) {
        return Err(Error::degenerate(
            "iterative imputation needs at least one fully observed feature column",
        ));
    }
    let init = impute_median_mode(frame)?;

    let mut order: Vec<usize> = (0..cols.len()).filter(|&j| cols[j].n_missing() > 0).collect();
    order.sort_by_key(|&j| (cols[j].n_missing(), j));

    let mut current: Vec<Vec<f64>> = features
        .iter()
        .map(|n| init.require(n).map(|c| c.values.clone()))
        .collect::<Result<_>>()?;

    let tree = TreeParams {
        max_depth: Some(config.max_depth),
        min_leaf: 1.0,
        max_features: MaxFeatures::All,
    };
    let mut change = f64::INFINITY;
    let mut iter = 0;
    while iter < config.max_iter && change > config.tol {
        let mut abs_change = 0.0;
        let mut n_numeric = 0usize;
        let mut n_discrete = 0usize;
        let mut n_flipped = 0usize;
        for &j in &order {
            let col = cols[j];
            let obs: Vec<usize> = (0..frame.n_rows()).filter(|&i| !col.missing[i]).collect();
            let mis: Vec<usize> = (0..frame.n_rows()).filter(|&i| col.missing[i]).collect();
            let predictors: Vec<String> =
                features.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, n)| n.clone()).collect();
            let pcols: Vec<Vec<f64>> =
                current.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, c)| c.clone()).collect();
            let x_all = FeatureMatrix::from_columns(predictors, &pcols)?;
            let x_obs = x_all.select_rows(&obs);
            let x_mis = x_all.select_rows(&mis);
            let y_obs: Vec<f64> = obs.iter().map(|&i| col.values[i]).collect();
            let stage_seed = seed::derive_indexed(seed, &format!("impute:{}", col.name()), iter as u64);

            let predicted: Vec<f64> = match col.kind() {
                ColumnKind::Continuous | ColumnKind::Score => {
                    let cfg = ForestConfig {
                        n_trees: config.n_trees,
                        tree,
                        sampling: RowSampling::Subsample(config.subsample),
                        criterion: Criterion::SquaredError,
                    };
                    let forest = Forest::fit(&x_obs, &y_obs, &cfg, stage_seed)?.forest;
                    let mut p = forest.predict(&x_mis);
                    if col.kind() == ColumnKind::Score {
                        let (lo, hi) = col
                            .spec
                            .range
                            .map(|[lo, hi]| (lo, hi))
                            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
                        p.iter_mut().for_each(|v| *v = v.round().clamp(lo, hi));
                    }
                    p
                }
                ColumnKind::Binary | ColumnKind::Categorical => {
                    let classes: Vec<f64> = {
                        let mut c: Vec<f64> = y_obs.clone();
                        c.sort_by(f64::total_cmp);
                        c.dedup();
                        c
                    };
                    if classes.len() == 1 {
                        vec![classes[0]; mis.len()]
                    } else {
                        // One-vs-rest forests; the class with the highest vote wins.
                        let to_fit: Vec<f64> = if classes.len() == 2 { vec![classes[1]] } else { classes.clone() };
                        let mut scores = vec![vec![0.0; mis.len()]; to_fit.len()];
                        for (c, &class) in to_fit.iter().enumerate() {
                            let target: Vec<f64> = y_obs.iter().map(|&v| f64::from(u8::from(v == class))).collect();
                            let cfg = ForestConfig {
                                n_trees: config.n_trees,
                                tree,
                                sampling: RowSampling::Subsample(config.subsample),
                                criterion: Criterion::Gini,
                            };
                            let s = seed::derive_indexed(stage_seed, "class", c as u64);
                            scores[c] = Forest::fit(&x_obs, &target, &cfg, s)?.forest.predict(&x_mis);
                        }
                        (0..mis.len())
                            .map(|i| {
                                if classes.len() == 2 {
                                    if scores[0][i] >= 0.5 {
                                        classes[1]
                                    } else {
                                        classes[0]
                                    }
                                } else {
                                    let mut best = 0;
                                    for c in 1..to_fit.len() {
                                        if scores[c][i] > scores[best][i] {
                                            best = c;
                                        }
                                    }
                                    to_fit[best]
                                }
                            })
                            .collect()
                    }
                }
            };

            for (&i, &v) in mis.iter().zip(&predicted) {
                if col.kind().is_numeric() {
                    abs_change += (v - current[j][i]).abs();
                    n_numeric += 1;
                } else {
                    n_discrete += 1;
                    n_flipped += usize::from(v != current[j][i]);
                }
                current[j][i] = v;
            }
        }
        change = if n_numeric > 0 {
            abs_change / n_numeric as f64
        } else if n_discrete > 0 {
            n_flipped as f64 / n_discrete as f64
        } else {
            0.0
        };
        iter += 1;
    }

    let mut out = frame.clone();
    for (name, values) in features.iter().zip(current) {
        out.replace_values(name, values)?;
    }
    Ok(out)
}
