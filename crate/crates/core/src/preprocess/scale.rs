use serde::{Deserialize, Serialize};

use crate::stats;

/// `x -> (x - offset) / scale`, the form both min-max and z-score take.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub offset: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { offset: 0.0, scale: 1.0 };

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.offset) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub values: Vec<f64>,
    pub params: Affine,
    /// The column had a single observed value; outputs are all 0.
    pub constant: bool,
}

fn finite(col: &[f64]) -> impl Iterator<Item = f64> + '_ {
    col.iter().copied().filter(|v| !v.is_nan())
}

/// Min-max scaling to [0, 1]. Missing (NaN) cells stay missing. A constant
/// column maps to 0 and is flagged.
pub fn minmax_scale(col: &[f64]) -> Scaled {
    let params = fit_minmax(col);
    let constant = is_constant(col);
    Scaled {
        values: col
            .iter()
            .map(|&v| if v.is_nan() { v } else { params.apply(v).clamp(0.0, 1.0) })
            .collect(),
        params,
        constant,
    }
}

fn is_constant(col: &[f64]) -> bool {
    let mut it = finite(col);
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

pub fn fit_minmax(col: &[f64]) -> Affine {
    let (lo, hi) = finite(col).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return Affine::IDENTITY;
    }
    let range = hi - lo;
    Affine {
        offset: lo,
        scale: if range > 0.0 { range } else { 1.0 },
    }
}

/// Standardization with the sample standard deviation. Constant columns map
/// to 0 and are flagged.
pub fn zscore(col: &[f64]) -> Scaled {
    let params = fit_zscore(col);
    Scaled {
        values: col.iter().map(|&v| params.apply(v)).collect(),
        params,
        constant: is_constant(col),
    }
}

pub fn fit_zscore(col: &[f64]) -> Affine {
    let obs: Vec<f64> = finite(col).collect();
    if obs.is_empty() {
        return Affine::IDENTITY;
    }
    let sd = stats::sample_sd(&obs);
    Affine {
        offset: stats::mean(&obs),
        scale: if sd > 0.0 { sd } else { 1.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minmax_basic() {
        let s = minmax_scale(&[2.0, 4.0, 6.0]);
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
        assert!(!s.constant);
    }

    #[test]
    fn minmax_constant() {
        let s = minmax_scale(&[5.0, 5.0, 5.0]);
        assert_eq!(s.values, vec![0.0, 0.0, 0.0]);
        assert!(s.constant);
    }

    #[test]
    fn minmax_keeps_missing() {
        let s = minmax_scale(&[1.0, f64::NAN, 3.0]);
        assert!(s.values[1].is_nan());
        assert_eq!(s.values[2], 1.0);
    }

    #[test]
    fn zscore_basic() {
        let s = zscore(&[1.0, 2.0, 3.0]);
        assert_eq!(s.values, vec![-1.0, 0.0, 1.0]);
        let c = zscore(&[4.0, 4.0]);
        assert_eq!(c.values, vec![0.0, 0.0]);
        assert!(c.constant);
    }

    proptest! {
        #[test]
        fn minmax_roundtrip_and_bounds(col in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
            let s = minmax_scale(&col);
            prop_assert!(s.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            if !s.constant {
                for (&z, &x) in s.values.iter().zip(&col) {
                    let mag = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    prop_assert!((s.params.invert(z) - x).abs() <= 1e-12 * mag);
                }
            }
        }

        #[test]
        fn zscore_moments(col in proptest::collection::vec(-1e3f64..1e3, 3..50)) {
            let s = zscore(&col);
            if !s.constant {
                prop_assert!(stats::mean(&s.values).abs() < 1e-12);
                prop_assert!((stats::sample_sd(&s.values) - 1.0).abs() < 1e-12);
            }
        }
    }
}
