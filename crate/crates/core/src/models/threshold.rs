use crate::error::{Error, Result};

/// Fraction of positives scored at or above `t`.
pub fn sensitivity_at(probs: &[f64], y: &[u8], t: f64) -> f64 {
    let pos = y.iter().filter(|&&v| v == 1).count();
    let hit = probs.iter().zip(y).filter(|(&p, &v)| v == 1 && p >= t).count();
    hit as f64 / pos as f64
}

/// Largest candidate threshold (observed scores plus 0) whose sensitivity
/// reaches `min_sensitivity`; among feasible thresholds this one maximizes
/// specificity.
pub fn choose_threshold(probs: &[f64], y: &[u8], min_sensitivity: f64) -> Result<f64> {
    if !(min_sensitivity > 0.0 && min_sensitivity <= 1.0) {
        return Err(Error::invalid("min_sensitivity must be in (0, 1]"));
    }
    if probs.len() != y.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 {
        return Err(Error::degenerate("threshold selection needs at least one positive"));
    }
    let mut pos_scores: Vec<f64> = probs.iter().zip(y).filter(|(_, &v)| v == 1).map(|(&p, _)| p).collect();
    pos_scores.sort_by(|a, b| b.total_cmp(a));
    // Sensitivity at t counts positives >= t, so the best feasible threshold
    // is the score of the ceil(floor * P)-th highest positive.
    let need = (1..=pos)
        .find(|&k| k as f64 / pos as f64 >= min_sensitivity)
        .unwrap_or(pos);
    let t = pos_scores[need - 1];
    Ok(t)
}
