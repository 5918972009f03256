use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, Family, FittedParams, ModelArtifact, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        })
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(Error::invalid(format!("unknown penalty {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub penalty: Penalty,
    /// Inverse regularization strength.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

/// Mean negative log-likelihood plus the smooth part of the penalty.
/// `theta` is the weights followed by the intercept.
fn smooth_value(theta: &[f64], x: &FeatureMatrix, y: &[u8], penalty: Penalty, c: f64) -> f64 {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut nll = 0.0;
    for (row, &yi) in x.rows().zip(y) {
        let z: f64 = row.iter().zip(&theta[..d]).map(|(a, w)| a * w).sum::<f64>() + theta[d];
        nll += softplus(z) - f64::from(yi) * z;
    }
    let mut v = nll / n;
    if penalty == Penalty::L2 {
        v += theta[..d].iter().map(|w| w * w).sum::<f64>() / (2.0 * c * n);
    }
    v
}

fn smooth_gradient(theta: &[f64], x: &FeatureMatrix, y: &[u8], penalty: Penalty, c: f64) -> Vec<f64> {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let mut g = vec![0.0; d + 1];
    for (row, &yi) in x.rows().zip(y) {
        let z: f64 = row.iter().zip(&theta[..d]).map(|(a, w)| a * w).sum::<f64>() + theta[d];
        let r = sigmoid(z) - f64::from(yi);
        for (gj, a) in g.iter_mut().zip(row) {
            *gj += r * a;
        }
        g[d] += r;
    }
    g.iter_mut().for_each(|v| *v /= n);
    if penalty == Penalty::L2 {
        for j in 0..d {
            g[j] += theta[j] / (c * n);
        }
    }
    g
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Full regularized objective: mean NLL + R(w) / (c n), with
/// R = ||w||² / 2 (l2) or ||w||₁ (l1). The intercept is not penalized.
pub fn logistic_objective(theta: &[f64], x: &FeatureMatrix, y: &[u8], penalty: Penalty, c: f64) -> f64 {
    let d = x.n_cols();
    let mut v = smooth_value(theta, x, y, penalty, c);
    if penalty == Penalty::L1 {
        v += theta[..d].iter().map(|w| w.abs()).sum::<f64>() / (c * x.n_rows() as f64);
    }
    v
}

/// Gradient of [`logistic_objective`] (for l1, valid away from zero weights).
pub fn logistic_gradient(theta: &[f64], x: &FeatureMatrix, y: &[u8], penalty: Penalty, c: f64) -> Vec<f64> {
    let d = x.n_cols();
    let mut g = smooth_gradient(theta, x, y, penalty, c);
    if penalty == Penalty::L1 {
        let k = 1.0 / (c * x.n_rows() as f64);
        for j in 0..d {
            g[j] += k * theta[j].signum() * f64::from(u8::from(theta[j] != 0.0));
        }
    }
    g
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Accelerated proximal gradient descent with backtracking line search and
/// adaptive restart. Converged once the gradient-mapping norm (the gradient
/// norm, for l2) drops below `tol`.
pub fn fit_logistic(x: &FeatureMatrix, y: &[u8], params: &LogisticParams) -> Result<ModelArtifact> {
    let spec = ModelSpec::Logistic(*params);
    spec.validate()?;
    let pos = check_training(x, y)?;
    let n = y.len();
    if pos == 0 || pos == n {
        return Ok(ModelArtifact::constant(Family::Logistic, pos as f64 / n as f64, x, &spec, 0));
    }
    let d = x.n_cols();
    let (penalty, c) = (params.penalty, params.c);
    let l1 = if penalty == Penalty::L1 { 1.0 / (c * n as f64) } else { 0.0 };
    let prox = |v: &mut [f64], step: f64| {
        if l1 > 0.0 {
            for w in &mut v[..d] {
                *w = soft_threshold(*w, step * l1);
            }
        }
    };
    let full = |t: &[f64]| logistic_objective(t, x, y, penalty, c);

    let mut theta = vec![0.0; d + 1];
    let base = pos as f64 / n as f64;
    theta[d] = (base / (1.0 - base)).ln();
    let mut momentum_point = theta.clone();
    let mut t_k = 1.0f64;
    let mut step = 1.0f64;
    let mut f_theta = full(&theta);
    let mut converged = false;

    for _ in 0..params.max_iter {
        let fy = smooth_value(&momentum_point, x, y, penalty, c);
        let g = smooth_gradient(&momentum_point, x, y, penalty, c);
        let mut next;
        loop {
            next = momentum_point.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<f64>>();
            prox(&mut next, step);
            let diff: Vec<f64> = next.iter().zip(&momentum_point).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&g).map(|(a, b)| a * b).sum();
            let quad: f64 = diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * step);
            if smooth_value(&next, x, y, penalty, c) <= fy + lin + quad + 1e-15 * fy.abs() || step < 1e-12 {
                break;
            }
            step *= 0.5;
        }
        let mapping_norm = next
            .iter()
            .zip(&momentum_point)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / step;
        let f_next = full(&next);
        if f_next > f_theta {
            // Restart momentum from the last iterate.
            t_k = 1.0;
            momentum_point = theta.clone();
            if mapping_norm < params.tol {
                converged = true;
                break;
            }
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        let beta = (t_k - 1.0) / t_next;
        momentum_point = next.iter().zip(&theta).map(|(a, b)| a + beta * (a - b)).collect();
        theta = next;
        f_theta = f_next;
        t_k = t_next;
        step = (step * 1.5).min(1e6);
        if mapping_norm < params.tol {
            converged = true;
            break;
        }
    }

    let intercept = theta[d];
    theta.truncate(d);
    let mut a = ModelArtifact::new(
        Family::Logistic,
        FittedParams::Logistic {
            weights: theta,
            intercept,
        },
        x,
        &spec,
        0,
    );
    if !converged {
        a.meta.converged = false;
        a.meta.flags.push(format!("not converged after {} iterations", params.max_iter));
    }
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (FeatureMatrix, Vec<u8>) {
        use rand::Rng;
        let mut rng = crate::seed::rng(5);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| u8::from(2.0 * r[0] - r[1] + 0.3 * rng.random::<f64>() > 0.6))
            .collect();
        (FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap(), y)
    }

    #[test]
    fn monotone_relationship_gives_positive_weight() {
        let x = FeatureMatrix::from_rows(vec!["x".into()], &[vec![0.0], vec![1.0]]).unwrap();
        let m = fit_logistic(&x, &[0, 1], &LogisticParams::default()).unwrap();
        match m.params {
            FittedParams::Logistic { ref weights, .. } => assert!(weights[0] > 0.0),
            _ => panic!(),
        }
        assert!(m.meta.converged);
    }

    #[test]
    fn l2_solution_has_vanishing_gradient() {
        let (x, y) = data();
        let p = LogisticParams { c: 10.0, ..Default::default() };
        let m = fit_logistic(&x, &y, &p).unwrap();
        assert!(m.meta.converged);
        let FittedParams::Logistic { weights, intercept } = m.params else { panic!() };
        let mut theta = weights.clone();
        theta.push(intercept);
        let g = logistic_gradient(&theta, &x, &y, Penalty::L2, 10.0);
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-5);
        assert!(weights[0] > 0.0 && weights[1] < 0.0);
    }

    #[test]
    fn l1_zeroes_irrelevant_weights_under_strong_penalty() {
        let (x, y) = data();
        let m = fit_logistic(&x, &y, &LogisticParams { penalty: Penalty::L1, c: 0.05, ..Default::default() }).unwrap();
        let FittedParams::Logistic { weights, .. } = m.params else { panic!() };
        assert_eq!(weights[2], 0.0);
    }

    #[test]
    fn extreme_penalty_gives_intercept_only() {
        let (x, y) = data();
        let m = fit_logistic(&x, &y, &LogisticParams { c: 1e-8, ..Default::default() }).unwrap();
        let FittedParams::Logistic { weights, intercept } = m.params else { panic!() };
        assert!(weights.iter().all(|w| w.abs() < 1e-5));
        let rate = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        assert!((sigmoid(intercept) - rate).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use rand::Rng;
        let (x, y) = data();
        let mut rng = crate::seed::rng(11);
        for penalty in [Penalty::L2, Penalty::L1] {
            for _ in 0..10 {
                let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let g = logistic_gradient(&theta, &x, &y, penalty, 0.5);
                for j in 0..4 {
                    let h = 1e-6;
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    let num = (logistic_objective(&tp, &x, &y, penalty, 0.5)
                        - logistic_objective(&tm, &x, &y, penalty, 0.5))
                        / (2.0 * h);
                    assert!((num - g[j]).abs() <= 1e-4 * num.abs().max(1e-3));
                }
            }
        }
    }
}
