use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the optimization framework.
///
/// Evaluation failures are not errors: they are recorded as data in
/// [`ResponseSet::status`](crate::evaluators::ResponseSet).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design space: {0}")]
    InvalidSpace(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("sampling failed: no feasible candidate after {draws} draws (dominant violation: {dominant})")]
    InfeasibleSpace { draws: usize, dominant: String },

    #[error("duplicate RBF centers at indices {0} and {1}")]
    DuplicateCenters(usize, usize),

    #[error("singular RBF system after ridge regularization")]
    SingularSystem,

    #[error("not enough points: need {needed}, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("missing response `{0}`")]
    MissingResponse(String),

    #[error("empty curve `{0}`")]
    EmptyCurve(String),

    #[error("curve mismatch: {0}")]
    CurveMismatch(String),

    #[error("objective count mismatch: expected {expected}, got {got}")]
    ObjectiveCount { expected: usize, got: usize },

    #[error("weight calibration degenerate: {0}")]
    CalibrationDegenerate(String),

    #[error("all {0} evaluations of the iteration failed; first reason: {1}")]
    AllEvaluationsFailed(usize, String),

    #[error("constant function: zero output variance")]
    ConstantFunction,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("state integrity error: {0}")]
    Integrity(String),

    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
