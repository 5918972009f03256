//! Discrimination and confusion metrics, bootstrap intervals, Welch t-tests
//! and leave-one-feature-out ablation.

mod metrics;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{
    auroc, bootstrap_ci, confusion_metrics, evaluate, roc_curve, welch_t_test, BootstrapSpec, EvalReport, WelchTest,
};

use crate::balance::Recipe;
use crate::dataio::Frame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub feature: String,
    pub auroc_without: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub baseline_auroc: f64,
    /// Sorted by delta, largest first (ties by feature name).
    pub entries: Vec<AblationEntry>,
}

impl AblationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["feature", "auroc_without", "delta", "baseline_auroc"])?;
        for e in &self.entries {
            out.write_record([
                e.feature.clone(),
                format!("{}", e.auroc_without),
                format!("{}", e.delta),
                format!("{}", self.baseline_auroc),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<ablation csv>", e))
    }
}

fn test_auroc(recipe: &Recipe, train: &Frame, test: &Frame, seed: u64) -> Result<f64> {
    let fitted = recipe.fit(train, seed)?;
    let probs = fitted.predict_frame(test)?;
    auroc(&probs, &test.labels()?)
}

/// Refits `recipe` on `train` once per feature with that feature dropped
/// (hyperparameters and seed unchanged) and scores each refit on `test`.
pub fn ablation(train: &Frame, test: &Frame, recipe: &Recipe, seed: u64) -> Result<AblationReport> {
    if recipe.features.len() < 2 {
        return Err(Error::invalid("ablation needs at least two features"));
    }
    let baseline_auroc = test_auroc(recipe, train, test, seed)?;
    let mut entries: Vec<AblationEntry> = recipe
        .features
        .par_iter()
        .map(|f| {
            let reduced = Recipe {
                features: recipe.features.iter().filter(|g| *g != f).cloned().collect(),
                ..recipe.clone()
            };
            let a = test_auroc(&reduced, train, test, seed)?;
            Ok(AblationEntry {
                feature: f.clone(),
                auroc_without: a,
                delta: baseline_auroc - a,
            })
        })
        .collect::<Result<_>>()?;
    entries.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.feature.cmp(&b.feature)));
    Ok(AblationReport {
        baseline_auroc,
        entries,
    })
}
