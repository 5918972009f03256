use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothed target encoding:
/// `category -> (n_c * mean_c + m * global_mean) / (n_c + m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoder {
    pub smoothing: f64,
    pub global_mean: f64,
    pub map: BTreeMap<String, f64>,
}

pub const DEFAULT_SMOOTHING: f64 = 10.0;

impl TargetEncoder {
    /// Fits on `fit_rows` only. `labels` uses NaN for a missing outcome.
    pub fn fit(
        categories: &[Option<&str>],
        labels: &[f64],
        fit_rows: &[usize],
        smoothing: f64,
    ) -> Result<Self> {
        if !(smoothing >= 0.0) {
            return Err(Error::invalid("smoothing constant must be >= 0"));
        }
        if fit_rows.is_empty() {
            return Err(Error::Empty("no rows to fit the target encoder on".into()));
        }
        let mut sums: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        let mut total = 0.0;
        let mut count = 0.0;
        for &i in fit_rows {
            let y = labels[i];
            if y.is_nan() {
                return Err(Error::invalid(format!("label missing on fit row {i}")));
            }
            total += y;
            count += 1.0;
            if let Some(c) = categories[i] {
                let e = sums.entry(c).or_default();
                e.0 += y;
                e.1 += 1.0;
            }
        }
        let global_mean = total / count;
        let map = sums
            .into_iter()
            .map(|(c, (s, n))| {
                let mean_c = s / n;
                let denom = n + smoothing;
                (c.to_string(), (n * mean_c + smoothing * global_mean) / denom)
            })
            .collect();
        Ok(Self {
            smoothing,
            global_mean,
            map,
        })
    }

    /// Unseen categories map to the global mean; missing stays NaN.
    pub fn transform(&self, categories: &[Option<&str>]) -> Vec<f64> {
        categories
            .iter()
            .map(|c| match c {
                Some(c) => self.map.get(*c).copied().unwrap_or(self.global_mean),
                None => f64::NAN,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsmoothed_mean() {
        let cats = [Some("a"), Some("a"), Some("b")];
        let e = TargetEncoder::fit(&cats, &[1.0, 1.0, 0.0], &[0, 1, 2], 0.0).unwrap();
        assert_eq!(e.transform(&[Some("a")]), vec![1.0]);
    }

    #[test]
    fn unseen_maps_to_global_mean() {
        let cats = [Some("a"), Some("b")];
        let e = TargetEncoder::fit(&cats, &[1.0, 0.0], &[0, 1], 10.0).unwrap();
        assert_eq!(e.transform(&[Some("zzz")]), vec![0.5]);
        assert!(e.transform(&[None])[0].is_nan());
    }

    #[test]
    fn smoothing_blends_toward_global() {
        // n_c = 2, mean_c = 0.5, global = 0.25, m = 2 -> (1 + 0.5) / 4
        let cats = [Some("a"), Some("a"), Some("b"), Some("b"), Some("c"), Some("c"), Some("c"), Some("c")];
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let e = TargetEncoder::fit(&cats, &y, &(0..8).collect::<Vec<_>>(), 2.0).unwrap();
        assert_eq!(e.global_mean, 0.25);
        assert!((e.map["a"] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn only_fit_rows_are_used() {
        let cats = [Some("a"), Some("a"), Some("a")];
        let y = [1.0, 1.0, 0.0];
        let train = TargetEncoder::fit(&cats, &y, &[0, 1], 0.0).unwrap();
        let all = TargetEncoder::fit(&cats, &y, &[0, 1, 2], 0.0).unwrap();
        assert_ne!(train.transform(&cats), all.transform(&cats));
    }

    #[test]
    fn missing_label_on_fit_rows() {
        let cats = [Some("a"), Some("b")];
        assert!(TargetEncoder::fit(&cats, &[1.0, f64::NAN], &[0, 1], 1.0).is_err());
        assert!(TargetEncoder::fit(&cats, &[1.0, f64::NAN], &[0], 1.0).is_ok());
    }
}
