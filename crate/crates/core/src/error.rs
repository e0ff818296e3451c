use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient kernel support at point {index}: {reason}")]
    InsufficientSupport { index: usize, reason: &'static str },

    #[error("empty coronary tree")]
    EmptyTree,

    #[error("classification of {branch} failed: {reason}")]
    ClassificationFailed { branch: &'static str, reason: String },

    #[error("invalid radius profile: {0}")]
    InvalidProfile(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty region of interest: {0}")]
    EmptyRoi(String),

    #[error("voxel grid mismatch between volume and mask")]
    GridMismatch,

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("class absent for criterion {criterion}: {detail}")]
    ClassAbsent { criterion: String, detail: String },

    #[error("missing feature `{0}`")]
    MissingFeature(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("invalid phantom specification: {0}")]
    PhantomSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing input file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("parse error in {} at byte {offset}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
