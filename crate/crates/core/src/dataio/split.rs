use rand::seq::SliceRandom;

use crate::dataio::frame::Frame;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class test count: `class_count * test_frac` rounded half-up.
fn class_test_count(count: usize, test_frac: f64) -> usize {
    (count as f64 * test_frac + 0.5).floor() as usize
}

/// Stratified train/test partition of `labels`. Each class contributes
/// `round(class_count * test_frac)` rows to the test side; the remainder go
/// to train. Both index lists come back sorted.
pub fn stratified_split_indices(labels: &[u8], test_frac: f64, seed: u64) -> Result<SplitIndices> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::invalid(format!("test_frac must be in (0, 1), got {test_frac}")));
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::degenerate(format!(
                "class {class} has {} member(s); at least 2 are needed to split",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let k = class_test_count(members.len(), test_frac);
        test.extend_from_slice(&members[..k]);
        train.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

pub fn stratified_split(frame: &Frame, test_frac: f64, seed: u64) -> Result<(Frame, Frame)> {
    let labels = frame.labels()?;
    let idx = stratified_split_indices(&labels, test_frac, seed)?;
    Ok((frame.select_rows(&idx.train), frame.select_rows(&idx.test)))
}
