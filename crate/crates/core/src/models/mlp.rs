use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_training, sigmoid, Family, FittedParams, ModelArtifact, ModelSpec};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden_units: 16,
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 100,
        }
    }
}

/// One hidden ReLU layer feeding a single logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub d: usize,
    pub h: usize,
    /// `h x d`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpWeights {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            d,
            h,
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; h],
            b2: 0.0,
        }
    }

    /// He-normal hidden weights, Glorot-scaled output weights, hidden biases
    /// 0.1 (so no unit starts dead on an all-zero input), output bias 0.
    pub fn init<R: Rng>(d: usize, h: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(d, h);
        let s1 = (2.0 / d.max(1) as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        for v in &mut w.w1 {
            *v = s1 * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut w.w2 {
            *v = s2 * rng.sample::<f64, _>(StandardNormal);
        }
        w.b1.iter_mut().for_each(|b| *b = 0.1);
        w
    }

    pub fn n_params(&self) -> usize {
        self.h * self.d + 2 * self.h + 1
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_flat(d: usize, h: usize, flat: &[f64]) -> Result<Self> {
        let mut w = Self::zeros(d, h);
        if flat.len() != w.n_params() {
            return Err(Error::invalid("flat parameter vector has the wrong length"));
        }
        let (a, rest) = flat.split_at(h * d);
        let (b, rest) = rest.split_at(h);
        let (c, rest) = rest.split_at(h);
        w.w1.copy_from_slice(a);
        w.b1.copy_from_slice(b);
        w.w2.copy_from_slice(c);
        w.b2 = rest[0];
        Ok(w)
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut z = self.b2;
        for k in 0..self.h {
            let row = &self.w1[k * self.d..(k + 1) * self.d];
            let pre = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[k];
            if pre > 0.0 {
                z += self.w2[k] * pre;
            }
        }
        z
    }

    fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

fn bce(z: f64, y: f64) -> f64 {
    let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    sp - y * z
}

/// Mean binary cross-entropy over `rows` and its gradient by backpropagation.
pub fn mlp_loss_and_grad(w: &MlpWeights, x: &FeatureMatrix, y: &[u8], rows: &[usize]) -> (f64, MlpWeights) {
    let (d, h) = (w.d, w.h);
    let mut g = MlpWeights::zeros(d, h);
    let mut loss = 0.0;
    let mut pre = vec![0.0; h];
    for &i in rows {
        let xi = x.row(i);
        let yi = f64::from(y[i]);
        let mut z = w.b2;
        for k in 0..h {
            let row = &w.w1[k * d..(k + 1) * d];
            pre[k] = row.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + w.b1[k];
            if pre[k] > 0.0 {
                z += w.w2[k] * pre[k];
            }
        }
        loss += bce(z, yi);
        let dz = sigmoid(z) - yi;
        g.b2 += dz;
        for k in 0..h {
            if pre[k] > 0.0 {
                g.w2[k] += dz * pre[k];
                let dpre = dz * w.w2[k];
                g.b1[k] += dpre;
                for (gw, &xv) in g.w1[k * d..(k + 1) * d].iter_mut().zip(xi) {
                    *gw += dpre * xv;
                }
            }
        }
    }
    let m = rows.len() as f64;
    let mut flat = g.to_flat();
    flat.iter_mut().for_each(|v| *v /= m);
    (loss / m, MlpWeights::from_flat(d, h, &flat).expect("same shape"))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains with Adam on shuffled minibatches. The full-data loss is recorded
/// after every epoch; if it becomes non-finite, training stops, the previous
/// epoch's weights are kept and the artifact is flagged.
pub fn fit_mlp(x: &FeatureMatrix, y: &[u8], params: &MlpParams, seed_v: u64) -> Result<ModelArtifact> {
    let spec = ModelSpec::Mlp(*params);
    spec.validate()?;
    let pos = check_training(x, y)?;
    let n = y.len();
    if pos == 0 || pos == n {
        return Ok(ModelArtifact::constant(Family::Mlp, pos as f64 / n as f64, x, &spec, seed_v));
    }
    let (d, h) = (x.n_cols(), params.hidden_units);
    let mut rng = seed::stage_rng(seed_v, "mlp");
    let mut w = MlpWeights::init(d, h, &mut rng);
    let mut flat = w.to_flat();
    let mut adam = Adam {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
        lr: params.learning_rate,
    };
    let all: Vec<usize> = (0..n).collect();
    let mut order = all.clone();
    let mut history = Vec::with_capacity(params.epochs);
    let mut diverged = false;

    for _ in 0..params.epochs {
        let snapshot = w.clone();
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let (_, g) = mlp_loss_and_grad(&w, x, y, batch);
            adam.step(&mut flat, &g.to_flat());
            w = MlpWeights::from_flat(d, h, &flat)?;
        }
        let (loss, _) = mlp_loss_and_grad(&w, x, y, &all);
        if !loss.is_finite() || !w.is_finite() {
            w = snapshot;
            diverged = true;
            break;
        }
        history.push(loss);
    }

    let mut a = ModelArtifact::new(Family::Mlp, FittedParams::Mlp(w), x, &spec, seed_v);
    if diverged {
        a.meta.converged = false;
        a.meta.flags.push("training loss diverged".into());
    }
    a.meta.loss_history = history;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hidden_units_rejected() {
        let x = FeatureMatrix::from_rows(vec!["a".into()], &[vec![0.0], vec![1.0]]).unwrap();
        let p = MlpParams { hidden_units: 0, ..Default::default() };
        assert!(fit_mlp(&x, &[0, 1], &p, 0).is_err());
    }

    #[test]
    fn learns_xor() {
        let x = FeatureMatrix::from_rows(
            vec!["a".into(), "b".into()],
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        let y = [0, 1, 1, 0];
        let p = MlpParams {
            hidden_units: 8,
            learning_rate: 0.05,
            batch_size: 4,
            epochs: 1000,
        };
        for seed in 0..10 {
            let probs = fit_mlp(&x, &y, &p, seed).unwrap().predict_proba(&x).unwrap();
            for (p, &t) in probs.iter().zip(&y) {
                assert_eq!(u8::from(*p >= 0.5), t, "seed {seed}: {probs:?}");
            }
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = crate::seed::rng(1);
        let w = MlpWeights::init(3, 4, &mut rng);
        assert_eq!(MlpWeights::from_flat(3, 4, &w.to_flat()).unwrap(), w);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = crate::seed::rng(2);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] * r[1] > 0.0)).collect();
        let x = FeatureMatrix::from_rows(vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
        let all: Vec<usize> = (0..30).collect();
        for _ in 0..10 {
            let w = MlpWeights::init(3, 5, &mut rng);
            let (_, g) = mlp_loss_and_grad(&w, &x, &y, &all);
            let theta = w.to_flat();
            let ga = g.to_flat();
            let mut num = vec![0.0; theta.len()];
            for j in 0..theta.len() {
                let eps = 1e-6;
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[j] += eps;
                tm[j] -= eps;
                let lp = mlp_loss_and_grad(&MlpWeights::from_flat(3, 5, &tp).unwrap(), &x, &y, &all).0;
                let lm = mlp_loss_and_grad(&MlpWeights::from_flat(3, 5, &tm).unwrap(), &x, &y, &all).0;
                num[j] = (lp - lm) / (2.0 * eps);
            }
            let diff: f64 = ga.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale: f64 = ga.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            assert!(diff / scale < 1e-3, "{}", diff / scale);
        }
    }
}
