//! Clinical feature extraction from chest CT segmentation outputs, and the
//! boosted decision-tree machinery that triages COVID-19 against other lung
//! abnormalities from those features.

pub mod error;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod learn;
pub mod morphology;
pub mod phantom;
pub mod volume;

pub use error::{Error, Result};

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_200_519;
