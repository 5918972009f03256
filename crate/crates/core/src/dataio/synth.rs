//! Synthetic cohort generation from published per-stratum marginals.
//!
//! Features are drawn independently within each outcome stratum; no
//! inter-feature correlation is modeled.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataio::frame::{Column, ColumnKind, ColumnSpec, Frame};
use crate::error::{Error, Result};
use crate::seed;

const BUNDLED_STRATA: &str = include_str!("../../data/cohort_strata.toml");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub unit: String,
    pub survivor: Moments,
    pub nonsurvivor: Moments,
    /// Clamp bounds. Score features use their declared integer range here.
    /// When absent, each stratum clamps to its own `mean ± 4 sd`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

impl FeatureStats {
    pub fn stratum(&self, died: bool) -> Moments {
        if died {
            self.nonsurvivor
        } else {
            self.survivor
        }
    }

    pub fn bounds(&self, died: bool) -> (f64, f64) {
        match self.range {
            Some([lo, hi]) => (lo, hi),
            None => {
                let m = self.stratum(died);
                (m.mean - 4.0 * m.sd, m.mean + 4.0 * m.sd)
            }
        }
    }

    pub fn column_spec(&self) -> ColumnSpec {
        ColumnSpec {
            name: self.name.clone(),
            kind: self.kind,
            unit: self.unit.clone(),
            range: self.range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumStats {
    pub prevalence: f64,
    #[serde(default = "default_label")]
    pub label: String,
    pub features: Vec<FeatureStats>,
}

fn default_label() -> String {
    "died_28d".to_string()
}

impl StratumStats {
    /// The 19-feature survivor / non-survivor table bundled with the crate.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_STRATA).expect("bundled stats parse")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let stats: Self = toml::from_str(s)?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureStats> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::invalid(format!(
                "prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        if self.features.is_empty() {
            return Err(Error::invalid("stats declare no features"));
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) || f.name == self.label {
                return Err(Error::invalid(format!("duplicate feature name {:?}", f.name)));
            }
            for m in [f.survivor, f.nonsurvivor] {
                if !(m.sd >= 0.0) || !m.mean.is_finite() {
                    return Err(Error::invalid(format!(
                        "feature {:?}: sd must be >= 0 and mean finite",
                        f.name
                    )));
                }
                if f.kind == ColumnKind::Binary && !(0.0..=1.0).contains(&m.mean) {
                    return Err(Error::invalid(format!(
                        "binary feature {:?}: rate {} outside [0, 1]",
                        f.name, m.mean
                    )));
                }
            }
            if f.kind == ColumnKind::Categorical {
                return Err(Error::invalid(format!(
                    "feature {:?}: categorical features cannot be generated from moments",
                    f.name
                )));
            }
            if let Some([lo, hi]) = f.range {
                if !(lo <= hi) {
                    return Err(Error::invalid(format!("feature {:?}: range lo > hi", f.name)));
                }
            }
        }
        Ok(())
    }
}

/// Draws an `n`-row cohort. Labels are Bernoulli(prevalence); each feature is
/// drawn from its stratum: normal (clamped, and rounded for scores) or
/// Bernoulli for binary features.
pub fn generate_synthetic_cohort(stats: &StratumStats, n: usize, seed: u64) -> Result<Frame> {
    stats.validate()?;
    if n < 50 {
        return Err(Error::invalid(format!("cohort size must be at least 50, got {n}")));
    }
    let mut rng = seed::rng(seed);
    let d = stats.features.len();
    let mut cols = vec![Vec::with_capacity(n); d];
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let died = rng.random::<f64>() < stats.prevalence;
        labels.push(if died { 1.0 } else { 0.0 });
        for (f, col) in stats.features.iter().zip(cols.iter_mut()) {
            let m = f.stratum(died);
            let v = match f.kind {
                ColumnKind::Binary => {
                    if rng.random::<f64>() < m.mean {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => {
                    let z: f64 = rng.sample(StandardNormal);
                    let (lo, hi) = f.bounds(died);
                    let v = (m.mean + m.sd * z).clamp(lo, hi);
                    if f.kind == ColumnKind::Score {
                        v.round().clamp(lo.ceil(), hi.floor())
                    } else {
                        v
                    }
                }
            };
            col.push(v);
        }
    }
    let mut columns: Vec<Column> = stats
        .features
        .iter()
        .zip(cols)
        .map(|(f, values)| Column::numeric(f.column_spec(), values))
        .collect();
    columns.push(Column::numeric(
        ColumnSpec::new(stats.label.clone(), ColumnKind::Binary).with_unit("Outcome"),
        labels,
    ));
    Frame::new(columns, Some(stats.label.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_is_complete() {
        let s = StratumStats::bundled();
        assert_eq!(s.features.len(), 19);
        assert_eq!(s.prevalence, 0.196);
        let aps = s.feature("apsiii").unwrap();
        assert_eq!(aps.nonsurvivor, Moments { mean: 64.28, sd: 20.24 });
        assert_eq!(s.feature("vasopressin").unwrap().nonsurvivor.mean, 0.52);
    }

    #[test]
    fn positive_count_within_binomial_band() {
        let f = generate_synthetic_cohort(&StratumStats::bundled(), 1478, 11).unwrap();
        let pos = f.labels().unwrap().iter().filter(|&&v| v == 1).count() as f64;
        let band = 3.0 * (1478.0f64 * 0.196 * 0.804).sqrt();
        assert!((pos - 1478.0 * 0.196).abs() <= band, "positives {pos}");
    }

    #[test]
    fn nonsurvivor_apsiii_mean() {
        let f = generate_synthetic_cohort(&StratumStats::bundled(), 1478, 11).unwrap();
        let y = f.labels().unwrap();
        let aps = &f.require("apsiii").unwrap().values;
        let dead: Vec<f64> = aps.iter().zip(&y).filter(|(_, &l)| l == 1).map(|(&v, _)| v).collect();
        let m = dead.len() as f64;
        let mean = crate::stats::mean(&dead);
        assert!((mean - 64.28).abs() <= 3.0 * 20.24 / m.sqrt(), "mean {mean}");
    }

    #[test]
    fn zero_sd_gives_constant_feature() {
        let mut s = StratumStats::bundled();
        s.features[2].survivor.sd = 0.0;
        s.features[2].nonsurvivor = s.features[2].survivor;
        let f = generate_synthetic_cohort(&s, 200, 3).unwrap();
        let mean = s.features[2].survivor.mean;
        assert!(f.require("o2_flow").unwrap().values.iter().all(|&v| v == mean));
    }

    #[test]
    fn scores_are_integers_in_range() {
        let f = generate_synthetic_cohort(&StratumStats::bundled(), 2000, 4).unwrap();
        let gcs = &f.require("gcs_eye_opening").unwrap().values;
        assert!(gcs.iter().all(|&v| v.fract() == 0.0 && (1.0..=4.0).contains(&v)));
    }

    #[test]
    fn invalid_stats_are_rejected() {
        let mut s = StratumStats::bundled();
        s.features[0].survivor.sd = -1.0;
        assert!(generate_synthetic_cohort(&s, 100, 0).is_err());
        let mut s = StratumStats::bundled();
        s.features[12].nonsurvivor.mean = 1.2;
        assert!(generate_synthetic_cohort(&s, 100, 0).is_err());
        assert!(generate_synthetic_cohort(&StratumStats::bundled(), 49, 0).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let s = StratumStats::bundled();
        let a = generate_synthetic_cohort(&s, 100, 8).unwrap();
        let b = generate_synthetic_cohort(&s, 100, 8).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
