//! First-order accumulated local effects.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataio::{ColumnKind, Frame};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::models::RiskModel;
use crate::stats;

pub const DEFAULT_ALE_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum AleBinning {
    /// Equal-mass bins at the `k / n_bins` quantiles, duplicate edges merged.
    Quantile { n_bins: usize },
    /// One edge per distinct observed value.
    Levels,
}

impl AleBinning {
    /// Levels for score and binary columns, quantile bins otherwise.
    pub fn for_kind(kind: ColumnKind) -> Self {
        match kind {
            ColumnKind::Score | ColumnKind::Binary => AleBinning::Levels,
            _ => AleBinning::Quantile {
                n_bins: DEFAULT_ALE_BINS,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AleCurve {
    pub feature: String,
    pub edges: Vec<f64>,
    /// Centered effect at each edge, in probability units.
    pub ale: Vec<f64>,
    /// Rows per bin; bin `k` spans `(edges[k], edges[k + 1]]`, the first
    /// bin also holding `edges[0]`.
    pub bin_counts: Vec<usize>,
}

impl AleCurve {
    pub fn n(&self) -> usize {
        self.bin_counts.iter().sum()
    }

    /// Piecewise-linear interpolation, flat outside the edges.
    pub fn interpolate(&self, v: f64) -> f64 {
        let e = &self.edges;
        if v <= e[0] {
            return self.ale[0];
        }
        if v >= e[e.len() - 1] {
            return self.ale[e.len() - 1];
        }
        let k = e.partition_point(|&z| z < v).max(1) - 1;
        let t = (v - e[k]) / (e[k + 1] - e[k]);
        self.ale[k] + t * (self.ale[k + 1] - self.ale[k])
    }

    /// `edge,ale,count` rows; `count` is the size of the bin ending at the
    /// edge (0 for the first edge).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["edge", "ale", "count"])?;
        for k in 0..self.edges.len() {
            let count = if k == 0 { 0 } else { self.bin_counts[k - 1] };
            out.write_record([format!("{}", self.edges[k]), format!("{}", self.ale[k]), count.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<ale csv>", e))
    }
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    // first k with v <= edges[k + 1]
    let m = edges.len() - 1;
    let k = edges[1..].partition_point(|&z| z < v);
    k.min(m - 1)
}

/// ALE of `feature` for `model` over the rows of `x` (columns in the model's
/// feature order, raw units). Rows where the feature is missing are skipped.
pub fn ale_first_order(model: &dyn RiskModel, x: &FeatureMatrix, feature: &str, binning: AleBinning) -> Result<AleCurve> {
    let j = x
        .column_index(feature)
        .ok_or_else(|| Error::invalid(format!("unknown feature {feature:?}")))?;
    let rows: Vec<usize> = (0..x.n_rows()).filter(|&i| !x.get(i, j).is_nan()).collect();
    let values: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
    let sorted = stats::sorted_copy(&values);
    let mut edges: Vec<f64> = match binning {
        AleBinning::Quantile { n_bins } => {
            if n_bins < 2 {
                return Err(Error::invalid("ALE needs at least 2 bins"));
            }
            (0..=n_bins)
                .map(|k| stats::quantile_sorted(&sorted, k as f64 / n_bins as f64))
                .collect()
        }
        AleBinning::Levels => sorted.clone(),
    };
    edges.dedup();
    if edges.len() < 2 {
        return Err(Error::degenerate(format!("feature {feature:?} has a single distinct value")));
    }
    let m = edges.len() - 1;
    let bins: Vec<usize> = values.iter().map(|&v| bin_of(&edges, v)).collect();

    let mut probe = FeatureMatrix::new(x.names().to_vec(), 0, Vec::new())?;
    for (&i, &b) in rows.iter().zip(&bins) {
        let mut r = x.row(i).to_vec();
        r[j] = edges[b];
        probe.push_row(&r);
        r[j] = edges[b + 1];
        probe.push_row(&r);
    }
    let f = model.predict_proba(&probe)?;

    let mut sum = vec![0.0; m];
    let mut bin_counts = vec![0usize; m];
    for (r, &b) in bins.iter().enumerate() {
        sum[b] += f[2 * r + 1] - f[2 * r];
        bin_counts[b] += 1;
    }
    let mut raw = vec![0.0; m + 1];
    for k in 0..m {
        let effect = if bin_counts[k] > 0 { sum[k] / bin_counts[k] as f64 } else { 0.0 };
        raw[k + 1] = raw[k] + effect;
    }
    let mut curve = AleCurve {
        feature: feature.to_string(),
        edges,
        ale: raw,
        bin_counts,
    };
    let center = values.iter().map(|&v| curve.interpolate(v)).sum::<f64>() / values.len() as f64;
    curve.ale.iter_mut().for_each(|a| *a -= center);
    Ok(curve)
}

/// ALE with binning chosen from the frame's column kind.
pub fn ale_for_frame(model: &dyn RiskModel, frame: &Frame, feature: &str) -> Result<AleCurve> {
    let kind = frame.require(feature)?.kind();
    let x = frame.matrix(model.feature_order())?;
    ale_first_order(model, &x, feature, AleBinning::for_kind(kind))
}
