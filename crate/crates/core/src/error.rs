use std::path::PathBuf;

use thiserror::Error;

use crate::volume::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("cannot parse header {path}: {reason}")]
    HeaderParse { path: PathBuf, reason: String },

    #[error("raw file {path} holds {actual} bytes, expected {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("voxel type mismatch: file stores {found}, caller expects {expected}")]
    DTypeMismatch { expected: String, found: String },

    #[error("invalid orientation code {0:?}")]
    InvalidOrientationCode(String),

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("negative radius {0} mm")]
    NegativeRadius(f64),

    #[error("lungs mask is empty")]
    EmptyLungs,

    #[error("component has no voxels")]
    EmptyComponent,

    #[error("case rejected by validation: {0}")]
    ExtractionRejected(ValidationReport),

    #[error("node has zero total weight")]
    EmptyNode,

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("both classes are required")]
    SingleClassData,

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("no weak learner beat chance on the first boosting round")]
    NoWeakLearner,

    #[error("class {class} has {count} cases, fewer than {k} folds")]
    TooFewPerClass {
        class: &'static str,
        count: usize,
        k: usize,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("lesion {index} extends outside the lungs")]
    LesionOutsideLungs { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
