//! Tabular data: frames, CSV ingestion, stratified splitting and synthetic
//! cohort generation.

mod csvio;
mod frame;
mod split;
mod synth;

pub use csvio::{load_csv, read_csv, write_csv, write_csv_to};
pub use frame::{Column, ColumnKind, ColumnSpec, Frame, Schema};
pub use split::{stratified_split, stratified_split_indices, SplitIndices};
pub use synth::{generate_synthetic_cohort, FeatureStats, Moments, StratumStats};
