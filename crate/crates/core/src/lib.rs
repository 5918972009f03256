//! Tabular mortality-risk modeling toolkit.
//!
//! The crate covers the full modeling path for a binary clinical outcome:
//! CSV ingestion and synthetic cohorts ([`dataio`]), imputation, scaling and
//! encoding ([`preprocess`]), two-stage feature selection ([`featselect`]),
//! SMOTE and leakage-safe cross-validation ([`balance`]), five classifier
//! families ([`models`]), bootstrapped evaluation and ablation
//! ([`evalstats`]), accumulated local effects ([`interpret`]) and Monte Carlo
//! posterior risk distributions ([`posterior`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod balance;
pub mod dataio;
pub mod error;
pub mod evalstats;
pub mod featselect;
pub mod forest;
pub mod interpret;
pub mod matrix;
pub mod models;
pub mod posterior;
pub mod preprocess;
pub mod seed;
pub mod stats;
pub mod tree;

pub use dataio::{ColumnKind, ColumnSpec, Frame, Schema, StratumStats};
pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
