use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Irregularly sampled measurements: `(hours since ICU admission, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    points: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("time series points must be finite"));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::invalid("time stamps must be non-decreasing"));
        }
        Ok(Self { points })
    }

    /// Keeps the points recorded in `[0, hours]`.
    pub fn first_hours(&self, hours: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .copied()
                .filter(|&(t, _)| (0.0..=hours).contains(&t))
                .collect(),
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub min: f64,
    pub max: f64,
    /// Least-squares slope of value on time, in value units per hour.
    pub slope: f64,
    /// Coefficient of variation, sample sd / |mean|.
    pub cov: f64,
    pub iqr: f64,
    /// Intercept of the fitted line; kept for diagnostics, not exported as a feature.
    #[serde(skip)]
    pub intercept: f64,
    /// Fewer than two distinct time stamps: slope reported as 0.
    pub slope_degenerate: bool,
    /// Mean of zero: cov reported as 0.
    pub cov_undefined: bool,
}

pub fn summarize_series(series: &TimeSeries) -> Result<SeriesSummary> {
    if series.is_empty() {
        return Err(Error::Empty("time series has no points".into()));
    }
    let t: Vec<f64> = series.points.iter().map(|p| p.0).collect();
    let v: Vec<f64> = series.points.iter().map(|p| p.1).collect();

    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let t_mean = stats::mean(&t);
    let v_mean = stats::mean(&v);
    let sxx: f64 = t.iter().map(|ti| (ti - t_mean).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&v).map(|(ti, vi)| (ti - t_mean) * (vi - v_mean)).sum();
    let (slope, slope_degenerate) = if sxx > 0.0 { (sxy / sxx, false) } else { (0.0, true) };
    let intercept = v_mean - slope * t_mean;

    let sd = stats::sample_sd(&v);
    let (cov, cov_undefined) = if v_mean == 0.0 {
        (0.0, true)
    } else {
        (sd / v_mean.abs(), false)
    };

    let sorted = stats::sorted_copy(&v);
    let iqr = stats::quantile_sorted(&sorted, 0.75) - stats::quantile_sorted(&sorted, 0.25);

    Ok(SeriesSummary {
        min,
        max,
        slope,
        cov,
        iqr,
        intercept,
        slope_degenerate,
        cov_undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(p: &[(f64, f64)]) -> TimeSeries {
        TimeSeries::new(p.to_vec()).unwrap()
    }

    #[test]
    fn exact_line() {
        let s = summarize_series(&ts(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)])).unwrap();
        assert!((s.slope - 2.0).abs() < 1e-15);
        assert!((s.intercept - 1.0).abs() < 1e-15);
        assert_eq!((s.min, s.max), (1.0, 5.0));
    }

    #[test]
    fn hand_ols() {
        // cov(t, v) = 1, var(t) = 2 (sums over three points)
        let s = summarize_series(&ts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 1.0)])).unwrap();
        assert!((s.slope - 0.5).abs() < 1e-15);
    }

    #[test]
    fn iqr_uses_linear_interpolation() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, i as f64)).collect();
        let s = summarize_series(&ts(&pts)).unwrap();
        assert_eq!(s.iqr, 2.0);
    }

    #[test]
    fn constant_series() {
        let s = summarize_series(&ts(&[(0.0, 4.0), (3.0, 4.0), (7.5, 4.0)])).unwrap();
        assert_eq!((s.slope, s.cov, s.iqr), (0.0, 0.0, 0.0));
        assert!(!s.slope_degenerate);
    }

    #[test]
    fn single_point_and_zero_mean() {
        let s = summarize_series(&ts(&[(2.0, 5.0)])).unwrap();
        assert!(s.slope_degenerate);
        assert_eq!(s.slope, 0.0);
        let z = summarize_series(&ts(&[(0.0, -1.0), (1.0, 1.0)])).unwrap();
        assert!(z.cov_undefined);
        assert_eq!(z.cov, 0.0);
        assert!(summarize_series(&ts(&[])).is_err());
    }

    #[test]
    fn rejects_decreasing_time() {
        assert!(TimeSeries::new(vec![(1.0, 0.0), (0.5, 0.0)]).is_err());
    }

    #[test]
    fn first_day_window() {
        let s = ts(&[(0.0, 1.0), (23.0, 2.0), (30.0, 9.0)]).first_hours(24.0);
        assert_eq!(s.len(), 2);
    }

    proptest! {
        #[test]
        fn slope_is_translation_invariant(
            vals in proptest::collection::vec(-100.0f64..100.0, 2..30),
            shift in -50.0f64..50.0,
        ) {
            let pts: Vec<(f64, f64)> = vals.iter().enumerate().map(|(i, &v)| (i as f64 * 0.7, v)).collect();
            let shifted: Vec<(f64, f64)> = pts.iter().map(|&(t, v)| (t + shift, v)).collect();
            let a = summarize_series(&ts(&pts)).unwrap();
            let b = summarize_series(&ts(&shifted)).unwrap();
            let tol = 1e-12 * a.slope.abs().max(1.0);
            prop_assert!((a.slope - b.slope).abs() < tol, "{} vs {}", a.slope, b.slope);
            prop_assert!(a.min <= a.max);
        }
    }
}
