//! Bagged tree ensembles (random forests) for classification and regression.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::seed;
use crate::tree::{Criterion, MaxFeatures, Presorted, Targets, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSampling {
    /// n draws with replacement.
    Bootstrap,
    /// A fraction of rows without replacement.
    Subsample(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub sampling: RowSampling,
    /// `Gini` for binary classification, `SquaredError` for regression.
    pub criterion: Criterion,
}

impl ForestConfig {
    pub fn classifier(n_trees: usize, max_depth: Option<usize>, min_leaf: usize) -> Self {
        Self {
            n_trees,
            tree: TreeParams {
                max_depth,
                min_leaf: min_leaf as f64,
                max_features: MaxFeatures::Sqrt,
            },
            sampling: RowSampling::Bootstrap,
            criterion: Criterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

pub struct FittedForest {
    pub forest: Forest,
    /// Per-feature sum over trees of `p(t) * Δi(t)`, not normalized.
    pub raw_importance: Vec<f64>,
}

fn row_weights<R: Rng>(n: usize, sampling: RowSampling, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match sampling {
        RowSampling::Bootstrap => {
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1.0;
            }
        }
        RowSampling::Subsample(frac) => {
            let k = ((n as f64 * frac).round() as usize).clamp(1, n);
            for i in rand::seq::index::sample(rng, n, k) {
                w[i] = 1.0;
            }
        }
    }
    w
}

impl Forest {
    pub fn fit(x: &FeatureMatrix, y: &[f64], config: &ForestConfig, seed: u64) -> Result<FittedForest> {
        let pre = Presorted::new(x)?;
        Self::fit_presorted(&pre, y, config, seed)
    }

    pub fn fit_presorted(
        pre: &Presorted,
        y: &[f64],
        config: &ForestConfig,
        seed: u64,
    ) -> Result<FittedForest> {
        let n = pre.n_rows();
        if n == 0 || y.len() != n {
            return Err(Error::invalid("forest needs a non-empty target aligned with the rows"));
        }
        if config.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if matches!(config.criterion, Criterion::Newton { .. }) {
            return Err(Error::invalid("forests use Gini or squared-error criteria"));
        }
        let y2: Vec<f64> = y.iter().map(|v| v * v).collect();
        let d = pre.n_features();
        let grown: Vec<(Tree, Vec<f64>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(seed::derive_indexed(seed, "forest-tree", t as u64));
                let w = row_weights(n, config.sampling, &mut rng);
                let total: f64 = w.iter().sum();
                let mut imp = vec![0.0; d];
                let tree = Tree::fit(
                    pre,
                    &Targets { weight: &w, a: y, b: &y2 },
                    config.criterion,
                    &config.tree,
                    &mut rng,
                    Some(&mut imp),
                );
                imp.iter_mut().for_each(|v| *v /= total);
                (tree, imp)
            })
            .collect();
        let mut raw_importance = vec![0.0; d];
        let mut trees = Vec::with_capacity(grown.len());
        for (tree, imp) in grown {
            for (acc, v) in raw_importance.iter_mut().zip(imp) {
                *acc += v;
            }
            trees.push(tree);
        }
        Ok(FittedForest {
            forest: Forest { trees },
            raw_importance,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let s: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        s / self.trees.len() as f64
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Normalizes raw importances to sum to one (uniform when no split was made).
pub fn normalize_importance(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regression_forest_tracks_a_line() {
        let x: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 20.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0]).collect();
        let m = FeatureMatrix::from_rows(vec!["x".into()], &x).unwrap();
        let cfg = ForestConfig {
            n_trees: 25,
            tree: TreeParams {
                max_depth: Some(8),
                min_leaf: 1.0,
                max_features: MaxFeatures::All,
            },
            sampling: RowSampling::Subsample(0.8),
            criterion: Criterion::SquaredError,
        };
        let f = Forest::fit(&m, &y, &cfg, 1).unwrap().forest;
        assert!((f.predict_row(&[5.0]) - 10.0).abs() < 0.2);
    }

    #[test]
    fn seed_determinism() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![(i * 37 % 100) as f64, (i % 7) as f64]).collect();
        let y: Vec<f64> = (0..100).map(|i| ((i * 37 % 100) > 50) as u8 as f64).collect();
        let m = FeatureMatrix::from_rows(vec!["a".into(), "b".into()], &x).unwrap();
        let cfg = ForestConfig::classifier(20, None, 1);
        let a = Forest::fit(&m, &y, &cfg, 5).unwrap();
        let b = Forest::fit(&m, &y, &cfg, 5).unwrap();
        assert_eq!(a.forest, b.forest);
        assert_eq!(a.raw_importance, b.raw_importance);
    }
}
