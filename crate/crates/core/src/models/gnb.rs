use serde::{Deserialize, Serialize};

use super::{check_training, Family, FittedParams, ModelArtifact, ModelSpec};
use crate::error::Result;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnbParams {
    pub var_smoothing: f64,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self { var_smoothing: 1e-9 }
    }
}

fn class_moments(x: &FeatureMatrix, y: &[u8], class: u8) -> (Vec<f64>, Vec<f64>, usize) {
    let d = x.n_cols();
    let rows: Vec<&[f64]> = x.rows().zip(y).filter(|(_, &c)| c == class).map(|(r, _)| r).collect();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(*r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in &rows {
        for j in 0..d {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var, rows.len())
}

/// Gaussian naive Bayes with maximum-likelihood (population) variances, each
/// floored at `var_smoothing` times the largest feature variance.
pub fn fit_gnb(x: &FeatureMatrix, y: &[u8], params: &GnbParams) -> Result<ModelArtifact> {
    let spec = ModelSpec::Gnb(*params);
    spec.validate()?;
    let pos = check_training(x, y)?;
    let n = y.len();
    if pos == 0 || pos == n {
        return Ok(ModelArtifact::constant(Family::Gnb, pos as f64 / n as f64, x, &spec, 0));
    }
    let all = vec![0u8; n];
    let (_, total_var, _) = class_moments(x, &all, 0);
    let max_var = total_var.iter().copied().fold(0.0, f64::max);
    let floor = if max_var > 0.0 {
        params.var_smoothing * max_var
    } else {
        params.var_smoothing
    };
    let (m0, mut v0, n0) = class_moments(x, y, 0);
    let (m1, mut v1, n1) = class_moments(x, y, 1);
    for v in v0.iter_mut().chain(v1.iter_mut()) {
        *v = v.max(floor);
    }
    let log_prior = [(n0 as f64 / n as f64).ln(), (n1 as f64 / n as f64).ln()];
    Ok(ModelArtifact::new(
        Family::Gnb,
        FittedParams::Gnb {
            log_prior,
            mean: [m0, m1],
            var: [v0, v1],
        },
        x,
        &spec,
        0,
    ))
}

pub(crate) fn posterior(log_prior: &[f64; 2], mean: &[Vec<f64>; 2], var: &[Vec<f64>; 2], z: &[f64]) -> f64 {
    let ll = |c: usize| {
        let mut s = log_prior[c];
        for j in 0..z.len() {
            let v = var[c][j];
            s -= 0.5 * (2.0 * std::f64::consts::PI * v).ln() + (z[j] - mean[c][j]).powi(2) / (2.0 * v);
        }
        s
    };
    super::sigmoid(ll(1) - ll(0))
}
