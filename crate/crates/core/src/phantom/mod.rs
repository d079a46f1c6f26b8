//! Synthetic cases with known feature values.

mod corpus;
mod render;
mod spec;
mod truth;

pub use corpus::{generate_corpus, signal_channels, write_corpus, Corpus, CorpusOptions, GeneratedCase};
pub use render::{generate_case, render};
pub use spec::{
    Ellipsoid, LesionSpec, LesionTexture, PhantomClass, PhantomRanges, PhantomSpec, Profile, CONSOLIDATION_HU, GGO_HU,
    PHANTOM_DIMS, TARGET_SHELL_DEPTH_MM,
};
pub use truth::{oracle_features, tolerance_for, GroundTruth, Mismatch};
