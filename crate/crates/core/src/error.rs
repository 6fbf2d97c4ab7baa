use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the engagement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: malformed row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("{0}: file has no data rows")]
    EmptyFile(PathBuf),

    #[error("duplicate video id `{0}` in manifest")]
    DuplicateVideoId(String),

    #[error("manifest mixes ordinal and continuous labels")]
    MixedLabelKinds,

    #[error("manifest entry `{video_id}` points at missing file {path}")]
    UnresolvablePath { video_id: String, path: PathBuf },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("every frame of `{0}` failed tracking")]
    AllFramesInvalid(String),

    #[error("series is empty")]
    EmptySeries,

    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("feature layout mismatch: expected `{expected}`, found `{found}`")]
    LayoutMismatch { expected: String, found: String },

    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("gradient check requires inference mode (dropout is active)")]
    StochasticGradientCheck,

    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: PathBuf, reason: String },

    #[error("label {value} out of range for {classes} classes")]
    OutOfRange { value: usize, classes: usize },

    #[error("probability input out of [0, 1]: {0}")]
    InputOutOfRange(f64),

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("training diverged at epoch {epoch}: loss = {loss:.3e}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("missing checkpoint in {0}")]
    MissingCheckpoint(PathBuf),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than by the caller or
    /// by the optimizer.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::DivergedLoss { .. })
    }
}
