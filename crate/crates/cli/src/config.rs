//! Run configuration: one TOML document, every key optional, with
//! `section.key=value` overrides applied on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use icurisk::models::{default_grid, Family, HyperGrid, HyperValue};
use icurisk::preprocess::PreprocessConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub smote: SmoteSettings,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub ale: AleConfig,
    #[serde(default)]
    pub posterior: PosteriorConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// Cohort drawn from stratum statistics; `stats` defaults to the bundled
    /// survivor / non-survivor table.
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stats: Option<PathBuf>,
        #[serde(default = "default_cohort_size")]
        n: usize,
    },
    Csv {
        path: PathBuf,
        /// TOML column schema; must name the label column.
        schema: PathBuf,
        #[serde(default)]
        missing_token: String,
    },
}

fn default_cohort_size() -> usize {
    1478
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig::Synthetic {
            stats: None,
            n: default_cohort_size(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub k1: usize,
    pub k2: usize,
    /// Final feature list; when set, selection is skipped.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k1: 30,
            k2: 19,
            features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_frac: f64,
    pub folds: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_frac: 0.3,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmotePlacement {
    /// Inside every tuning fold and on the full training split.
    #[default]
    Both,
    Folds,
    Final,
    Off,
}

impl SmotePlacement {
    pub fn in_folds(self) -> bool {
        matches!(self, SmotePlacement::Both | SmotePlacement::Folds)
    }

    pub fn in_final(self) -> bool {
        matches!(self, SmotePlacement::Both | SmotePlacement::Final)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSettings {
    pub placement: SmotePlacement,
    pub k_neighbors: usize,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        Self {
            placement: SmotePlacement::Both,
            k_neighbors: icurisk::balance::DEFAULT_K_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub families: Vec<Family>,
    /// Family used for ablation, ALE and the posterior.
    pub primary: Family,
    /// Per-family grid overrides, `family -> axis -> candidates`.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub grids: BTreeMap<Family, BTreeMap<String, Vec<HyperValue>>>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            families: Family::ALL.to_vec(),
            primary: Family::Gbdt,
            grids: BTreeMap::new(),
        }
    }
}

impl ModelsConfig {
    pub fn grid(&self, family: Family) -> HyperGrid {
        match self.grids.get(&family) {
            Some(axes) => HyperGrid {
                family,
                axes: axes.clone(),
            },
            None => default_grid(family),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    /// Scores of the held-out test split.
    #[default]
    Test,
    /// Out-of-fold scores on the training split.
    OutOfFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub floor: f64,
    pub source: ThresholdSource,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            floor: 0.8,
            source: ThresholdSource::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bootstrap_b: usize,
    pub alpha: f64,
    pub ablation: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            bootstrap_b: 2000,
            alpha: 0.05,
            ablation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AleConfig {
    /// Continuous-feature bin count; score and binary features use their levels.
    pub n_bins: usize,
    /// Features to explain; all model features when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

impl Default for AleConfig {
    fn default() -> Self {
        Self {
            n_bins: icurisk::interpret::DEFAULT_ALE_BINS,
            features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    pub n: usize,
    /// JSON prior document; defaults to priors fitted on the deceased
    /// training rows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub priors: Option<PathBuf>,
}

impl Default for PosteriorConfig {
    fn default() -> Self {
        Self {
            n: icurisk::posterior::DEFAULT_SAMPLES,
            priors: None,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override. The value is read as a TOML
/// literal and falls back to a bare string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key {key:?}")));
    }
    let mut table = doc;
    for part in &path[..path.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part:?} is not a table")))?;
    }
    table.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let s = &self.selection;
        if s.features.is_none() && (s.k2 == 0 || s.k2 > s.k1) {
            return bad(format!("selection needs 1 <= k2 <= k1 (k1 {}, k2 {})", s.k1, s.k2));
        }
        if let Some(f) = &s.features {
            if f.is_empty() {
                return bad("selection.features is empty".into());
            }
        }
        if !(self.split.test_frac > 0.0 && self.split.test_frac < 1.0) {
            return bad(format!("split.test_frac {} outside (0, 1)", self.split.test_frac));
        }
        if self.split.folds < 2 {
            return bad("split.folds must be at least 2".into());
        }
        if self.smote.k_neighbors == 0 {
            return bad("smote.k_neighbors must be at least 1".into());
        }
        if !(self.threshold.floor > 0.0 && self.threshold.floor <= 1.0) {
            return bad(format!("threshold.floor {} outside (0, 1]", self.threshold.floor));
        }
        if self.evaluation.bootstrap_b < 100 {
            return bad("evaluation.bootstrap_b must be at least 100".into());
        }
        if !(self.evaluation.alpha > 0.0 && self.evaluation.alpha < 1.0) {
            return bad(format!("evaluation.alpha {} outside (0, 1)", self.evaluation.alpha));
        }
        if self.ale.n_bins < 2 {
            return bad("ale.n_bins must be at least 2".into());
        }
        if self.posterior.n == 0 {
            return bad("posterior.n must be at least 1".into());
        }
        let m = &self.models;
        if m.families.is_empty() {
            return bad("models.families is empty".into());
        }
        if !m.families.contains(&m.primary) {
            return bad(format!("primary family {} is not in models.families", m.primary));
        }
        for f in &m.families {
            m.grid(*f)
                .validate()
                .map_err(|e| CliError::Config(format!("{f} grid: {e}")))?;
        }
        let mut paths: Vec<&Path> = Vec::new();
        match &self.input {
            InputConfig::Synthetic { stats, n } => {
                if *n < 50 {
                    return bad(format!("synthetic cohort size {n} below 50"));
                }
                paths.extend(stats.as_deref());
            }
            InputConfig::Csv { path, schema, .. } => {
                paths.push(path);
                paths.push(schema);
            }
        }
        paths.extend(self.posterior.priors.as_deref());
        for p in paths {
            if !p.exists() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!((c.selection.k1, c.selection.k2), (30, 19));
        assert_eq!(c.split.folds, 5);
        assert_eq!(c.evaluation.bootstrap_b, 2000);
        assert_eq!(c.threshold.floor, 0.8);
        assert_eq!(c.models.families.len(), 5);
        assert_eq!(c.input, InputConfig::default());
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "seed = 1\n[split]\nfolds = 3\n";
        let sets = vec![
            "seed=9".to_string(),
            "models.families=[\"gbdt\"]".to_string(),
            "output_dir=out/x".to_string(),
            "posterior.n=500".to_string(),
        ];
        let c = RunConfig::from_toml_str(text, &sets).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.split.folds, 3);
        assert_eq!(c.models.families, vec![Family::Gbdt]);
        assert_eq!(c.output_dir, PathBuf::from("out/x"));
        assert_eq!(c.posterior.n, 500);
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::from_toml_str("[models.grids.gbdt]\nn_iters = [10]\n", &[]).unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string().unwrap(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_settings_are_config_errors() {
        for bad in [
            "[selection]\nk1 = 5\nk2 = 6",
            "[threshold]\nfloor = 0.0",
            "[evaluation]\nbootstrap_b = 10",
            "[models]\nfamilies = [\"gnb\"]",
            "[models.grids.gbdt]\nlearning_rate = [-1.0]",
            "[input]\nkind = \"csv\"\npath = \"/nonexistent.csv\"\nschema = \"/nonexistent.toml\"",
            "unknown_key = 3",
        ] {
            let e = RunConfig::from_toml_str(bad, &[]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{bad}: {e}");
        }
    }
}
