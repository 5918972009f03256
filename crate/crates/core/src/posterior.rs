//! Monte Carlo posterior predictive risk.
//!
//! Feature profiles are drawn independently from per-feature priors, scored
//! by the model, and the empirical distribution of the scores summarized.
//! The posterior mean is the plain Monte Carlo average `(1/n) Σ f(x_i)`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::dataio::{ColumnKind, Frame, StratumStats};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::RiskModel;
use crate::seed::{self, StageRng};
use crate::stats;

pub const DEFAULT_SAMPLES: usize = 20_000;
pub const HISTOGRAM_BINS: usize = 40;
const CHUNK: usize = 1024;
const MIN_MASS: f64 = 1e-12;
const REJECTION_MASS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Prior {
    PointMass {
        value: f64,
    },
    TruncNormal {
        mu: f64,
        sd: f64,
        lo: f64,
        hi: f64,
        /// Round draws to the nearest integer inside `[lo, hi]` (score features).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        integer: bool,
    },
    Bernoulli {
        p: f64,
    },
    Empirical {
        values: Vec<f64>,
    },
}

fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn phi_inv(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        match self {
            Prior::PointMass { value } if !value.is_finite() => bad("point mass must be finite".into()),
            Prior::TruncNormal { mu, sd, lo, hi, integer } => {
                if !(mu.is_finite() && sd.is_finite() && lo.is_finite() && hi.is_finite()) {
                    return bad("truncated normal parameters must be finite".into());
                }
                if *sd < 0.0 || lo >= hi {
                    return bad(format!("truncated normal needs sd >= 0 and lo < hi (sd {sd}, lo {lo}, hi {hi})"));
                }
                if *integer && lo.ceil() > hi.floor() {
                    return bad(format!("no integer inside [{lo}, {hi}]"));
                }
                if self.mass() < MIN_MASS {
                    return Err(Error::degenerate(format!(
                        "truncation [{lo}, {hi}] holds negligible mass of N({mu}, {sd}^2)"
                    )));
                }
                Ok(())
            }
            Prior::Bernoulli { p } if !(0.0..=1.0).contains(p) => bad(format!("Bernoulli p {p} outside [0, 1]")),
            Prior::Empirical { values } if values.is_empty() || values.iter().any(|v| !v.is_finite()) => {
                bad("empirical prior needs finite values".into())
            }
            _ => Ok(()),
        }
    }

    /// Probability the untruncated normal puts inside `[lo, hi]` (1 otherwise).
    pub fn mass(&self) -> f64 {
        match *self {
            Prior::TruncNormal { mu, sd, lo, hi, .. } => {
                if sd == 0.0 {
                    f64::from(u8::from(lo <= mu && mu <= hi))
                } else {
                    phi((hi - mu) / sd) - phi((lo - mu) / sd)
                }
            }
            _ => 1.0,
        }
    }

    fn sample(&self, rng: &mut StageRng) -> f64 {
        match *self {
            Prior::PointMass { value } => value,
            Prior::Bernoulli { p } => f64::from(u8::from(rng.random::<f64>() < p)),
            Prior::Empirical { ref values } => values[rng.random_range(0..values.len())],
            Prior::TruncNormal { mu, sd, lo, hi, integer } => {
                let x = if sd == 0.0 {
                    mu
                } else if self.mass() >= REJECTION_MASS {
                    loop {
                        let z: f64 = rng.sample(StandardNormal);
                        let x = mu + sd * z;
                        if (lo..=hi).contains(&x) {
                            break x;
                        }
                    }
                } else {
                    let (a, b) = (phi((lo - mu) / sd), phi((hi - mu) / sd));
                    let u = a + (b - a) * rng.random::<f64>();
                    (mu + sd * phi_inv(u)).clamp(lo, hi)
                };
                if integer {
                    x.round().clamp(lo.ceil(), hi.floor())
                } else {
                    x
                }
            }
        }
    }
}

/// Feature name → prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorSpec {
    pub priors: BTreeMap<String, Prior>,
}

impl PriorSpec {
    pub fn get(&self, name: &str) -> Option<&Prior> {
        self.priors.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, prior: Prior) {
        self.priors.insert(name.into(), prior);
    }

    /// Validates every prior and checks that `features` are all covered.
    pub fn validate_for(&self, features: &[String]) -> Result<()> {
        let missing: Vec<String> = features.iter().filter(|f| !self.priors.contains_key(*f)).cloned().collect();
        if !missing.is_empty() {
            return Err(Error::invalid(format!("no prior for {missing:?}")));
        }
        for (name, p) in &self.priors {
            p.validate().map_err(|e| Error::invalid(format!("prior for {name:?}: {e}")))?;
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Priors from the deceased rows of `frame`: truncated normals at the
/// stratum mean / sd bounded by the stratum's observed range (integer-valued
/// for score columns), Bernoulli at the stratum rate for binary columns.
/// Zero-spread columns become point masses. Categorical columns must be
/// encoded first.
pub fn nonsurvivor_priors(frame: &Frame) -> Result<PriorSpec> {
    let labels = frame.labels()?;
    let dead: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if dead.is_empty() {
        return Err(Error::degenerate("no deceased rows to build priors from"));
    }
    let mut spec = PriorSpec::default();
    for name in frame.feature_names() {
        let col = frame.require(&name)?;
        let vals: Vec<f64> = dead.iter().filter(|&&i| !col.missing[i]).map(|&i| col.values[i]).collect();
        if vals.is_empty() {
            return Err(Error::degenerate(format!("{name:?} is missing in every deceased row")));
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = stats::mean(&vals);
        let prior = if lo == hi {
            Prior::PointMass { value: lo }
        } else {
            match col.kind() {
                ColumnKind::Binary => Prior::Bernoulli { p: mean },
                ColumnKind::Continuous | ColumnKind::Score => Prior::TruncNormal {
                    mu: mean,
                    sd: stats::sample_sd(&vals),
                    lo,
                    hi,
                    integer: col.kind() == ColumnKind::Score,
                },
                ColumnKind::Categorical => {
                    return Err(Error::invalid(format!("categorical column {name:?} must be encoded first")))
                }
            }
        };
        spec.insert(name, prior);
    }
    Ok(spec)
}

/// Priors straight from published stratum moments (`died` selects the
/// stratum). Bounds follow the generator's clamping bounds.
pub fn priors_from_stats(stats_v: &StratumStats, died: bool) -> PriorSpec {
    let mut spec = PriorSpec::default();
    for f in &stats_v.features {
        let m = f.stratum(died);
        let prior = match f.kind {
            ColumnKind::Binary => Prior::Bernoulli { p: m.mean },
            _ => {
                let (lo, hi) = f.bounds(died);
                Prior::TruncNormal {
                    mu: m.mean,
                    sd: m.sd,
                    lo,
                    hi,
                    integer: f.kind == ColumnKind::Score,
                }
            }
        };
        spec.insert(f.name.clone(), prior);
    }
    spec
}

/// Draws `n` profiles with columns in `features` order. Rows are produced in
/// fixed chunks, each with its own derived generator, so the result does not
/// depend on thread scheduling.
pub fn sample_profiles(priors: &PriorSpec, features: &[String], n: usize, seed_v: u64) -> Result<FeatureMatrix> {
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    priors.validate_for(features)?;
    let ps: Vec<&Prior> = features.iter().map(|f| &priors.priors[f]).collect();
    let d = features.len();
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut rng = seed::rng(seed::derive_indexed(seed_v, "posterior-chunk", c as u64));
            let mut out = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                for p in &ps {
                    out.push(p.sample(&mut rng));
                }
            }
            out
        })
        .collect();
    FeatureMatrix::new(features.to_vec(), n, chunks.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_samples: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub histogram: Histogram,
    pub seed: u64,
}

impl PosteriorSummary {
    pub fn from_risks(risks: &[f64], seed_v: u64) -> Result<Self> {
        if risks.is_empty() {
            return Err(Error::Empty("no risks to summarize".into()));
        }
        if risks.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid("risk outside [0, 1]"));
        }
        let n = risks.len();
        let sorted = stats::sorted_copy(risks);
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &r in risks {
            counts[((r * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        }
        Ok(Self {
            n_samples: n,
            mean: stats::mean(risks),
            sd: if n > 1 { stats::sample_sd(risks) } else { 0.0 },
            median: stats::quantile_sorted(&sorted, 0.5),
            q025: stats::quantile_sorted(&sorted, 0.025),
            q975: stats::quantile_sorted(&sorted, 0.975),
            histogram: Histogram {
                edges: (0..=HISTOGRAM_BINS).map(|k| k as f64 / HISTOGRAM_BINS as f64).collect(),
                counts,
            },
            seed: seed_v,
        })
    }

    /// Monte Carlo standard error of `mean`.
    pub fn mc_standard_error(&self) -> f64 {
        self.sd / (self.n_samples as f64).sqrt()
    }
}

/// Scores `n` prior draws with `model` and summarizes the risks.
pub fn posterior_risk(model: &dyn RiskModel, priors: &PriorSpec, n: usize, seed_v: u64) -> Result<PosteriorSummary> {
    let x = sample_profiles(priors, model.feature_order(), n, seed_v)?;
    let risks = model.predict_proba(&x)?;
    PosteriorSummary::from_risks(&risks, seed_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::FnModel;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn point_masses_give_identical_rows() {
        let mut p = PriorSpec::default();
        p.insert("a", Prior::PointMass { value: 2.5 });
        p.insert("b", Prior::PointMass { value: -1.0 });
        let x = sample_profiles(&p, &names(&["b", "a"]), 3000, 4).unwrap();
        assert!(x.rows().all(|r| r == [-1.0, 2.5]));
    }

    #[test]
    fn truncated_normal_respects_bounds_and_mean() {
        let mut p = PriorSpec::default();
        p.insert("a", Prior::TruncNormal { mu: 0.0, sd: 1.0, lo: -10.0, hi: 10.0, integer: false });
        p.insert("b", Prior::TruncNormal { mu: 0.0, sd: 1.0, lo: 4.0, hi: 4.5, integer: false });
        p.insert("c", Prior::TruncNormal { mu: 2.2, sd: 3.0, lo: 1.0, hi: 4.0, integer: true });
        let x = sample_profiles(&p, &names(&["a", "b", "c"]), 100_000, 1).unwrap();
        assert!(stats::mean(&x.column(0)).abs() < 0.02);
        assert!(x.column(1).iter().all(|v| (4.0..=4.5).contains(v)));
        assert!(x.column(2).iter().all(|v| [1.0, 2.0, 3.0, 4.0].contains(v)));
    }

    #[test]
    fn negligible_mass_is_an_error() {
        let mut p = PriorSpec::default();
        p.insert("a", Prior::TruncNormal { mu: 0.0, sd: 1.0, lo: 40.0, hi: 41.0, integer: false });
        assert!(sample_profiles(&p, &names(&["a"]), 10, 0).is_err());
    }

    #[test]
    fn chunking_is_deterministic_and_prefix_stable() {
        let mut p = PriorSpec::default();
        p.insert("a", Prior::Bernoulli { p: 0.3 });
        p.insert("b", Prior::Empirical { values: vec![1.0, 5.0, 7.0] });
        let x = sample_profiles(&p, &names(&["a", "b"]), 5000, 9).unwrap();
        assert_eq!(x, sample_profiles(&p, &names(&["a", "b"]), 5000, 9).unwrap());
        let y = sample_profiles(&p, &names(&["a", "b"]), 2048, 9).unwrap();
        assert_eq!(y.row(2047), x.row(2047));
    }

    #[test]
    fn collapse_equals_prediction() {
        let m = FnModel::new(names(&["a", "b"]), |r: &[f64]| 1.0 / (1.0 + (-(0.3 * r[0] - r[1])).exp()));
        let mut p = PriorSpec::default();
        p.insert("a", Prior::PointMass { value: 1.7 });
        p.insert("b", Prior::PointMass { value: 0.2 });
        let s = posterior_risk(&m, &p, 777, 3).unwrap();
        let f0 = 1.0 / (1.0 + (-(0.3 * 1.7 - 0.2f64)).exp());
        assert_eq!((s.mean, s.sd, s.q025, s.q975, s.median), (f0, 0.0, f0, f0, f0));
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 777);
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"apsiii": {"type": "trunc_normal", "mu": 64.28, "sd": 20.24, "lo": 0, "hi": 163, "integer": true},
                       "vasopressin": {"type": "bernoulli", "p": 0.52},
                       "age": {"type": "point_mass", "value": 70}}"#;
        let p = PriorSpec::from_json(json).unwrap();
        assert_eq!(p.get("vasopressin"), Some(&Prior::Bernoulli { p: 0.52 }));
        assert_eq!(PriorSpec::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn table_priors() {
        let p = priors_from_stats(&StratumStats::bundled(), true);
        match p.get("apsiii").unwrap() {
            Prior::TruncNormal { mu, sd, integer, .. } => {
                assert_eq!((*mu, *sd, *integer), (64.28, 20.24, true));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.get("vasopressin"), Some(&Prior::Bernoulli { p: 0.52 }));
    }
}
