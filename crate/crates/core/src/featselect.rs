//! Two-stage feature selection: a one-way ANOVA F filter keeps the top `k1`
//! features, then random-forest Gini importance keeps the top `k2` of those.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataio::Frame;
use crate::error::{Error, Result};
use crate::forest::{normalize_importance, Forest, ForestConfig, RowSampling};
use crate::tree::{Criterion, MaxFeatures, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Anova,
    Gini,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Anova => "anova",
            Stage::Gini => "gini",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub score: f64,
}

/// Features ordered by non-increasing score; ties ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub stage: Stage,
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    fn sorted(stage: Stage, mut entries: Vec<RankedFeature>) -> Self {
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        Self { stage, entries }
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.entries.iter().take(k).map(|e| e.name.clone()).collect()
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.score)
    }

    /// Appends `feature,stage,score,rank` rows (rank is 1-based).
    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([
                e.name.clone(),
                self.stage.as_str().to_string(),
                format!("{}", e.score),
                (i + 1).to_string(),
            ])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaF {
    pub f: f64,
    /// A class had fewer than two observed values; `f` is reported as 0.
    pub flagged: bool,
}

/// One-way ANOVA F statistic (between-group over within-group mean square)
/// for the two outcome groups. Missing (NaN) cells are skipped.
pub fn anova_f(col: &[f64], labels: &[u8]) -> AnovaF {
    let mut groups: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (&v, &y) in col.iter().zip(labels) {
        if !v.is_nan() {
            groups[usize::from(y == 1)].push(v);
        }
    }
    if groups.iter().any(|g| g.len() < 2) {
        return AnovaF { f: 0.0, flagged: true };
    }
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let means: Vec<f64> = groups.iter().map(|g| crate::stats::mean(g)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let ssb: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.len() as f64 * (m - grand).powi(2))
        .sum();
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let msb = ssb; // k - 1 = 1
    let msw = ssw / (n - 2.0);
    let f = if means[0] == means[1] || ssb == 0.0 {
        0.0
    } else if msw == 0.0 {
        f64::INFINITY
    } else {
        msb / msw
    };
    AnovaF { f, flagged: false }
}

/// Ranks every non-label column by ANOVA F and keeps the top `k`.
pub fn select_k_best(frame: &Frame, k: usize) -> Result<FeatureRanking> {
    let features = frame.feature_names();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > features.len() {
        return Err(Error::invalid(format!(
            "k = {k} exceeds the {} candidate features",
            features.len()
        )));
    }
    let labels = frame.labels()?;
    let entries = features
        .iter()
        .map(|name| {
            let col = frame.require(name)?;
            Ok(RankedFeature {
                name: name.clone(),
                score: anova_f(&col.values, &labels).f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranking = FeatureRanking::sorted(Stage::Anova, entries);
    ranking.entries.truncate(k);
    Ok(ranking)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GiniConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for GiniConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_leaf: 5,
            max_features: MaxFeatures::Sqrt,
        }
    }
}

/// Mean-decrease-in-impurity importance of every feature: for each split on
/// feature `x`, the fraction of samples reaching the node times the Gini
/// decrease, summed over all trees and normalized to sum to one.
pub fn gini_importance(frame: &Frame, n_trees: usize, seed: u64) -> Result<FeatureRanking> {
    gini_importance_with(
        frame,
        &GiniConfig {
            n_trees,
            ..GiniConfig::default()
        },
        seed,
    )
}

pub fn gini_importance_with(frame: &Frame, config: &GiniConfig, seed: u64) -> Result<FeatureRanking> {
    if frame.n_rows() < 2 {
        return Err(Error::degenerate("importance needs at least two rows"));
    }
    let labels = frame.labels()?;
    let pos = labels.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::degenerate("importance needs both outcome classes"));
    }
    let features = frame.feature_names();
    let x = frame.matrix(&features)?;
    let y: Vec<f64> = labels.iter().map(|&v| f64::from(v)).collect();
    let forest_cfg = ForestConfig {
        n_trees: config.n_trees,
        tree: TreeParams {
            max_depth: config.max_depth,
            min_leaf: config.min_leaf as f64,
            max_features: config.max_features,
        },
        sampling: RowSampling::Bootstrap,
        criterion: Criterion::Gini,
    };
    let fitted = Forest::fit(&x, &y, &forest_cfg, seed)?;
    let imp = normalize_importance(&fitted.raw_importance);
    let entries = features
        .into_iter()
        .zip(imp)
        .map(|(name, score)| RankedFeature { name, score })
        .collect();
    Ok(FeatureRanking::sorted(Stage::Gini, entries))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageSelection {
    pub anova: FeatureRanking,
    pub gini: FeatureRanking,
    pub selected: Vec<String>,
}

pub fn two_stage_select(frame: &Frame, k1: usize, k2: usize, seed: u64) -> Result<TwoStageSelection> {
    two_stage_select_with(frame, k1, k2, &GiniConfig::default(), seed)
}

pub fn two_stage_select_with(
    frame: &Frame,
    k1: usize,
    k2: usize,
    gini: &GiniConfig,
    seed: u64,
) -> Result<TwoStageSelection> {
    if k2 > k1 {
        return Err(Error::invalid(format!("k2 = {k2} exceeds k1 = {k1}")));
    }
    if k2 == 0 {
        return Err(Error::invalid("k2 must be at least 1"));
    }
    let anova = select_k_best(frame, k1)?;
    let survivors = frame.select_features(&anova.names())?;
    let gini = gini_importance_with(&survivors, gini, seed)?;
    let selected = gini.top(k2);
    Ok(TwoStageSelection { anova, gini, selected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{Column, ColumnKind, ColumnSpec};
    use crate::seed;
    use rand::Rng;

    fn frame(cols: Vec<(&str, Vec<f64>)>, y: Vec<u8>) -> Frame {
        let mut columns: Vec<Column> = cols
            .into_iter()
            .map(|(n, v)| Column::numeric(ColumnSpec::new(n, ColumnKind::Continuous), v))
            .collect();
        columns.push(Column::numeric(
            ColumnSpec::new("y", ColumnKind::Binary),
            y.into_iter().map(f64::from).collect(),
        ));
        Frame::new(columns, Some("y".into())).unwrap()
    }

    #[test]
    fn anova_hand_value() {
        let r = anova_f(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0, 0, 0, 1, 1, 1]);
        assert!((r.f - 13.5).abs() < 1e-9);
        assert!(!r.flagged);
    }

    #[test]
    fn anova_equal_means() {
        assert_eq!(anova_f(&[1.0, 2.0, 1.0, 2.0], &[0, 0, 1, 1]).f, 0.0);
    }

    #[test]
    fn anova_scale_invariance() {
        let x = [1.0, 2.5, 3.0, 4.5, 5.0, 6.2, 0.3];
        let y = [0, 1, 0, 1, 1, 0, 0];
        let scaled: Vec<f64> = x.iter().map(|v| 10.0 * v + 3.0).collect();
        assert!((anova_f(&x, &y).f - anova_f(&scaled, &y).f).abs() < 1e-9);
    }

    #[test]
    fn anova_small_class_is_flagged() {
        let r = anova_f(&[1.0, 2.0, 3.0, f64::NAN], &[0, 0, 0, 1]);
        assert!(r.flagged);
        assert_eq!(r.f, 0.0);
    }

    #[test]
    fn k_best_ties_break_by_name() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let f = frame(
            vec![("zeta", x.clone()), ("alpha", x.clone()), ("noise", vec![1.0, 6.0, 3.0, 4.0, 2.0, 5.0])],
            vec![0, 0, 0, 1, 1, 1],
        );
        let r = select_k_best(&f, 3).unwrap();
        assert_eq!(r.names(), vec!["alpha", "zeta", "noise"]);
        assert_eq!(select_k_best(&f, 1).unwrap().names(), vec!["alpha"]);
        assert!(select_k_best(&f, 0).is_err());
        assert!(select_k_best(&f, 4).is_err());
    }

    fn informative(n: usize, seed_v: u64) -> Frame {
        let mut rng = seed::rng(seed_v);
        let x1: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let x2: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<u8> = x1.iter().map(|&v| u8::from(v > 0.0)).collect();
        frame(vec![("x1", x1), ("x2", x2)], y)
    }

    #[test]
    fn gini_finds_the_informative_feature() {
        let r = gini_importance(&informative(500, 1), 200, 7).unwrap();
        assert_eq!(r.entries[0].name, "x1");
        assert!(r.entries[0].score >= 0.9, "{:?}", r.entries);
        let total: f64 = r.entries.iter().map(|e| e.score).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gini_noise_features_are_comparable() {
        let mut ratio_sum = 0.0;
        for s in 0..10 {
            let mut rng = seed::rng(100 + s);
            let cols: Vec<(String, Vec<f64>)> =
                (0..4).map(|j| (format!("n{j}"), (0..300).map(|_| rng.random::<f64>()).collect())).collect();
            let y: Vec<u8> = (0..300).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
            let f = frame(cols.iter().map(|(n, v)| (n.as_str(), v.clone())).collect(), y);
            let r = gini_importance(&f, 100, s).unwrap();
            let max = r.entries.first().unwrap().score;
            let min = r.entries.last().unwrap().score;
            ratio_sum += max / min;
        }
        assert!(ratio_sum / 10.0 <= 3.0, "mean ratio {}", ratio_sum / 10.0);
    }

    #[test]
    fn gini_degenerate_inputs() {
        let f = frame(vec![("x", vec![1.0])], vec![1]);
        assert!(gini_importance(&f, 10, 0).is_err());
        let f = frame(vec![("x", vec![1.0, 2.0, 3.0])], vec![1, 1, 1]);
        assert!(gini_importance(&f, 10, 0).is_err());
    }

    #[test]
    fn gini_is_permutation_equivariant() {
        let base = informative(300, 3);
        let mut rng = seed::rng(5);
        let x3: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let y: Vec<u8> = base.labels().unwrap();
        let cols = |order: &[&str]| -> Frame {
            let data: Vec<(&str, Vec<f64>)> = order
                .iter()
                .map(|&n| {
                    let v = if n == "x3" { x3.clone() } else { base.require(n).unwrap().values.clone() };
                    (n, v)
                })
                .collect();
            frame(data, y.clone())
        };
        let cfg = GiniConfig {
            n_trees: 30,
            max_features: MaxFeatures::All,
            ..Default::default()
        };
        let a = gini_importance_with(&cols(&["x1", "x2", "x3"]), &cfg, 11).unwrap();
        let b = gini_importance_with(&cols(&["x3", "x1", "x2"]), &cfg, 11).unwrap();
        for e in &a.entries {
            assert!((b.score_of(&e.name).unwrap() - e.score).abs() < 1e-12);
        }
    }

    #[test]
    fn two_stage_keeps_the_informative_feature() {
        for s in 0..10 {
            let mut rng = seed::rng(50 + s);
            let base = informative(400, 60 + s);
            let mut cols: Vec<(String, Vec<f64>)> = vec![
                ("x1".into(), base.require("x1").unwrap().values.clone()),
                ("x2".into(), base.require("x2").unwrap().values.clone()),
            ];
            for j in 0..4 {
                cols.push((format!("n{j}"), (0..400).map(|_| rng.random::<f64>()).collect()));
            }
            let f = frame(cols.iter().map(|(n, v)| (n.as_str(), v.clone())).collect(), base.labels().unwrap());
            let sel = two_stage_select(&f, 4, 2, s).unwrap();
            assert_eq!(sel.selected.len(), 2);
            assert!(sel.selected.contains(&"x1".to_string()));
            let stage1 = sel.anova.names();
            assert!(sel.selected.iter().all(|n| stage1.contains(n)));
        }
    }

    #[test]
    fn equal_k_only_reorders() {
        let f = informative(200, 9);
        let sel = two_stage_select(&f, 2, 2, 0).unwrap();
        let mut a = sel.anova.names();
        let mut b = sel.selected.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(two_stage_select(&f, 1, 2, 0).is_err());
    }

    #[test]
    fn ranking_csv_rows() {
        let f = informative(100, 2);
        let r = select_k_best(&f, 2).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        r.write_csv(&mut w).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert!(text.starts_with("x1,anova,"));
        assert!(text.lines().nth(1).unwrap().ends_with(",2"));
    }
}
