//! Imputation, time-series summaries, scaling and target encoding.
//!
//! Every learned quantity (fill values, encoders, scaling parameters) is fitted
//! on training rows only and captured in a [`FittedPreprocessor`], which
//! serializes to a sidecar so the same transforms can be replayed later.
//!
//! Two scalers are offered for continuous features, min-max and z-score; a run
//! picks one. Min-max is the default.

mod encode;
mod impute;
mod scale;
mod series;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use encode::{TargetEncoder, DEFAULT_SMOOTHING};
pub use impute::{impute_iterative_forest, impute_median_mode, IterativeForestConfig, MedianModeImputer};
pub use scale::{fit_minmax, fit_zscore, minmax_scale, zscore, Affine, Scaled};
pub use series::{summarize_series, SeriesSummary, TimeSeries};

use crate::dataio::{Column, ColumnKind, Frame};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum ImputerChoice {
    MedianMode,
    IterativeForest(IterativeForestConfig),
}

impl Default for ImputerChoice {
    fn default() -> Self {
        ImputerChoice::IterativeForest(IterativeForestConfig::default())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerChoice {
    #[default]
    MinMax,
    ZScore,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    #[serde(default)]
    pub imputer: ImputerChoice,
    #[serde(default)]
    pub scaler: ScalerChoice,
    #[serde(default = "default_smoothing")]
    pub target_smoothing: f64,
}

fn default_smoothing() -> f64 {
    DEFAULT_SMOOTHING
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            imputer: ImputerChoice::default(),
            scaler: ScalerChoice::default(),
            target_smoothing: DEFAULT_SMOOTHING,
        }
    }
}

/// Transforms learned from a training frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPreprocessor {
    pub features: Vec<String>,
    /// Median / mode of the training column (after encoding), used for cells
    /// that are missing at prediction time.
    pub fills: BTreeMap<String, f64>,
    pub encoders: BTreeMap<String, TargetEncoder>,
    pub scaler: ScalerChoice,
    pub scaling: BTreeMap<String, Affine>,
    /// Numeric columns whose training values were constant.
    pub constant: Vec<String>,
}

fn categorical_cells(col: &Column) -> Vec<Option<&str>> {
    col.values
        .iter()
        .zip(&col.missing)
        .map(|(&v, &m)| if m { None } else { Some(col.levels[v as usize].as_str()) })
        .collect()
}

impl FittedPreprocessor {
    /// Imputes and encodes `train`, then learns scaling on the result.
    /// Returns the preprocessor and the prepared (imputed, encoded, unscaled)
    /// training frame.
    pub fn fit(train: &Frame, features: &[String], config: &PreprocessConfig, seed: u64) -> Result<(Self, Frame)> {
        let subset = train.select_features(features)?;
        let labels: Vec<f64> = subset.labels()?.iter().map(|&v| f64::from(v)).collect();
        let rows: Vec<usize> = (0..subset.n_rows()).collect();

        let mut encoders = BTreeMap::new();
        let mut encoded = subset.clone();
        for name in features {
            let col = subset.require(name)?;
            if col.kind() != ColumnKind::Categorical {
                continue;
            }
            let cells = categorical_cells(col);
            let enc = TargetEncoder::fit(&cells, &labels, &rows, config.target_smoothing)?;
            replace_with_encoded(&mut encoded, name, enc.transform(&cells))?;
            encoders.insert(name.clone(), enc);
        }

        let fills = MedianModeImputer::fit(&encoded)?.fills;
        let prepared = match config.imputer {
            ImputerChoice::MedianMode => impute_median_mode(&encoded)?,
            ImputerChoice::IterativeForest(cfg) => impute_iterative_forest(&encoded, &cfg, seed)?,
        };

        let mut scaling = BTreeMap::new();
        let mut constant = Vec::new();
        for name in features {
            let col = prepared.require(name)?;
            let params = match (config.scaler, col.kind()) {
                (ScalerChoice::None, _) | (_, ColumnKind::Binary) => Affine::IDENTITY,
                (ScalerChoice::MinMax, _) => fit_minmax(&col.values),
                (ScalerChoice::ZScore, _) => fit_zscore(&col.values),
            };
            if col.kind() != ColumnKind::Binary {
                let first = col.values.first().copied();
                if col.values.iter().all(|&v| Some(v) == first) {
                    constant.push(name.clone());
                }
            }
            scaling.insert(name.clone(), params);
        }

        Ok((
            Self {
                features: features.to_vec(),
                fills,
                encoders,
                scaler: config.scaler,
                scaling,
                constant,
            },
            prepared,
        ))
    }

    /// Applies the fitted encoders to another frame (missing cells stay
    /// missing; imputation happens inside the model artifact).
    pub fn prepare(&self, frame: &Frame) -> Result<Frame> {
        let mut out = frame.select_features(&self.features)?;
        for (name, enc) in &self.encoders {
            let col = frame.require(name)?;
            let values = enc.transform(&categorical_cells(col));
            replace_with_encoded(&mut out, name, values)?;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn replace_with_encoded(frame: &mut Frame, name: &str, values: Vec<f64>) -> Result<()> {
    let col = frame
        .column_mut(name)
        .ok_or_else(|| crate::Error::invalid(format!("unknown column {name:?}")))?;
    col.spec.kind = ColumnKind::Continuous;
    col.levels.clear();
    frame.replace_values(name, values)
}
