use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, Family, FittedParams, ModelArtifact, ModelSpec};
use crate::error::Result;
use crate::matrix::FeatureMatrix;
use crate::seed;
use crate::tree::{Criterion, MaxFeatures, Presorted, Targets, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_iters: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum number of rows on each side of a split.
    pub min_leaf: f64,
    /// Row fraction drawn without replacement for each tree.
    pub subsample: f64,
    pub l2_leaf: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_iters: 200,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1.0,
            subsample: 1.0,
            l2_leaf: 1.0,
        }
    }
}

fn log_loss(f: &[f64], y: &[u8]) -> f64 {
    let s: f64 = f
        .iter()
        .zip(y)
        .map(|(&z, &yi)| {
            let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            sp - f64::from(yi) * z
        })
        .sum();
    s / f.len() as f64
}

/// Gradient boosting on binary log-loss. Each stage fits a regression tree
/// whose splits maximize the second-order gain and whose leaves take the
/// damped Newton step `-G / (H + l2_leaf)`, shrunk by the learning rate.
/// The training log-loss before the first tree and after every tree is
/// recorded in `meta.loss_history`.
pub fn fit_gbdt(x: &FeatureMatrix, y: &[u8], params: &GbdtParams, seed_v: u64) -> Result<ModelArtifact> {
    let spec = ModelSpec::Gbdt(*params);
    spec.validate()?;
    let pos = check_training(x, y)?;
    let n = y.len();
    if pos == 0 || pos == n {
        return Ok(ModelArtifact::constant(Family::Gbdt, pos as f64 / n as f64, x, &spec, seed_v));
    }
    let rate = pos as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let pre = Presorted::new(x)?;
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf,
        max_features: MaxFeatures::All,
    };
    let criterion = Criterion::Newton { l2: params.l2_leaf };
    let mut rng = seed::stage_rng(seed_v, "gbdt");
    let mut f = vec![base_score; n];
    let mut history = vec![log_loss(&f, y)];
    let mut trees = Vec::with_capacity(params.n_iters);
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut w = vec![1.0; n];
    let k = ((n as f64 * params.subsample).round() as usize).clamp(1, n);

    for _ in 0..params.n_iters {
        for i in 0..n {
            let p = sigmoid(f[i]);
            g[i] = p - f64::from(y[i]);
            h[i] = p * (1.0 - p);
        }
        if k < n {
            w.iter_mut().for_each(|v| *v = 0.0);
            for i in index::sample(&mut rng, n, k) {
                w[i] = 1.0;
            }
        }
        let tree = Tree::fit(
            &pre,
            &Targets { weight: &w, a: &g, b: &h },
            criterion,
            &tree_params,
            &mut rng,
            None,
        );
        for i in 0..n {
            f[i] += params.learning_rate * tree.predict(x.row(i));
        }
        history.push(log_loss(&f, y));
        trees.push(tree);
    }

    let mut a = ModelArtifact::new(
        Family::Gbdt,
        FittedParams::Gbdt {
            base_score,
            learning_rate: params.learning_rate,
            trees,
        },
        x,
        &spec,
        seed_v,
    );
    if history.iter().any(|v| !v.is_finite()) {
        a.meta.converged = false;
        a.meta.flags.push("non-finite training loss".into());
    }
    a.meta.loss_history = history;
    Ok(a)
}
