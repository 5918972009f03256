use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve via the rank-sum formulation: the probability that
/// a random positive outscores a random negative, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("AUROC needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps average ranks of tie groups integral.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1; doubled average = i + j + 2
        let avg2 = (i + j + 2) as u64;
        let n_pos_in_group = idx[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        rank_sum2 += avg2 * n_pos_in_group;
        i = j + 1;
    }
    let pos_u = pos as u64;
    let u2 = rank_sum2 - pos_u * (pos_u + 1);
    Ok(u2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC points from (0, 0) to (1, 1), one per distinct score threshold.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("ROC curve needs both classes"));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Percentile bootstrap interval for AUROC. Rows are resampled with
/// replacement; a resample containing a single class is redrawn so every one
/// of the `b` replicates counts.
pub fn bootstrap_ci(scores: &[f64], labels: &[u8], b: usize, alpha: f64, seed_v: u64) -> Result<(f64, f64)> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::degenerate("bootstrap AUROC needs both classes"));
    }
    if b < 100 {
        return Err(Error::invalid(format!("at least 100 bootstrap replicates required, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha must be in (0, 1)"));
    }
    let n = scores.len();
    let mut reps: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|r| {
            use rand::Rng;
            let mut rng = seed::rng(seed::derive_indexed(seed_v, "bootstrap", r as u64));
            let mut s = vec![0.0; n];
            let mut y = vec![0u8; n];
            loop {
                let mut npos = 0;
                for k in 0..n {
                    let i = rng.random_range(0..n);
                    s[k] = scores[i];
                    y[k] = labels[i];
                    npos += usize::from(labels[i] == 1);
                }
                if npos > 0 && npos < n {
                    break;
                }
            }
            auroc(&s, &y).expect("both classes present")
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    Ok((
        stats::quantile_sorted(&reps, alpha / 2.0),
        stats::quantile_sorted(&reps, 1.0 - alpha / 2.0),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub accuracy: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ppv: f64,
    pub npv: f64,
    pub threshold: f64,
    pub n: usize,
    pub prevalence: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Rates whose denominator was zero (reported as 0).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl EvalReport {
    pub const CSV_HEADER: [&'static str; 16] = [
        "auroc", "ci_low", "ci_high", "accuracy", "f1", "sensitivity", "specificity", "ppv", "npv",
        "threshold", "n", "prevalence", "tp", "fp", "tn", "fn",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        [
            self.auroc,
            self.ci_low,
            self.ci_high,
            self.accuracy,
            self.f1,
            self.sensitivity,
            self.specificity,
            self.ppv,
            self.npv,
            self.threshold,
        ]
        .iter()
        .map(|v| format!("{v}"))
        .chain([
            self.n.to_string(),
            format!("{}", self.prevalence),
            self.tp.to_string(),
            self.fp.to_string(),
            self.tn.to_string(),
            self.fn_.to_string(),
        ])
        .collect()
    }
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Threshold-dependent metrics; a case is called positive iff `prob >= threshold`.
/// The AUROC fields are left at NaN; see [`evaluate`].
pub fn confusion_metrics(probs: &[f64], labels: &[u8], threshold: f64) -> Result<EvalReport> {
    let (pos, _) = check_inputs(probs, labels)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    if probs.is_empty() {
        return Err(Error::Empty("no predictions".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut undefined = Vec::new();
    let n = probs.len();
    let sensitivity = ratio(tp, tp + fn_, "sensitivity", &mut undefined);
    let specificity = ratio(tn, tn + fp, "specificity", &mut undefined);
    let ppv = ratio(tp, tp + fp, "ppv", &mut undefined);
    let npv = ratio(tn, tn + fn_, "npv", &mut undefined);
    let f1 = if ppv + sensitivity > 0.0 {
        2.0 * ppv * sensitivity / (ppv + sensitivity)
    } else {
        undefined.push("f1".into());
        0.0
    };
    Ok(EvalReport {
        auroc: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
        accuracy: (tp + tn) as f64 / n as f64,
        f1,
        sensitivity,
        specificity,
        ppv,
        npv,
        threshold,
        n,
        prevalence: pos as f64 / n as f64,
        tp,
        fp,
        tn,
        fn_,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

/// Full report: AUROC, its bootstrap interval (collapsed onto the point
/// estimate when `bootstrap` is `None`) and the confusion metrics.
pub fn evaluate(
    probs: &[f64],
    labels: &[u8],
    threshold: f64,
    bootstrap: Option<BootstrapSpec>,
) -> Result<EvalReport> {
    let mut report = confusion_metrics(probs, labels, threshold)?;
    report.auroc = auroc(probs, labels)?;
    let (lo, hi) = match bootstrap {
        Some(b) => bootstrap_ci(probs, labels, b.replicates, b.alpha, b.seed)?,
        None => (report.auroc, report.auroc),
    };
    // A percentile interval can, rarely, exclude the point estimate; widen it
    // so that ci_low <= auroc <= ci_high always holds.
    report.ci_low = lo.min(report.auroc);
    report.ci_high = hi.max(report.auroc);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Two-sided Welch t-test with Welch–Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("each sample needs at least two values"));
    }
    let (ma, mb) = (stats::mean(a), stats::mean(b));
    let (va, vb) = (stats::sample_variance(a), stats::sample_variance(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Ok(WelchTest {
                t: 0.0,
                df: na + nb - 2.0,
                p: 1.0,
            });
        }
        return Err(Error::degenerate(
            "both samples have zero variance but different means",
        ));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = stats::student_t_two_sided(t, df).max(f64::MIN_POSITIVE);
    Ok(WelchTest { t, df, p })
}
