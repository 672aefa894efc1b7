use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,

    #[error("non-COLA window: window-square sum {sum:e} at sample {sample}")]
    NonColaWindow { sample: usize, sum: f64 },

    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient frames for normalization: need at least 2, got {0}")]
    InsufficientFrames(usize),

    #[error("insufficient inventory: {0} profile(s), need at least 2")]
    InsufficientInventory(usize),

    #[error("speaker {0} is not in the inventory")]
    MissingSpeaker(u32),

    #[error("speaker pool exhausted: need {needed}, have {available}")]
    PoolExhausted { needed: usize, available: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("gradient check failed: {0}")]
    GradcheckFailed(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("refusing to overwrite existing {0} (pass --force)")]
    WouldOverwrite(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(
        context: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    ) -> Self {
        Error::ShapeMismatch {
            context,
            expected,
            got,
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::WouldOverwrite(_) => 2,
            Error::NonFinite(_)
            | Error::Diverged { .. }
            | Error::NonColaWindow { .. }
            | Error::GradcheckFailed(_) => 4,
            _ => 3,
        }
    }

    /// Short stable tag used in machine-parsable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyInput => "empty_input",
            Error::NonColaWindow { .. } => "non_cola_window",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::InsufficientFrames(_) => "insufficient_frames",
            Error::InsufficientInventory(_) => "insufficient_inventory",
            Error::MissingSpeaker(_) => "missing_speaker",
            Error::PoolExhausted { .. } => "pool_exhausted",
            Error::NonFinite(_) => "non_finite",
            Error::Diverged { .. } => "diverged",
            Error::GradcheckFailed(_) => "gradcheck_failed",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Wav(_) => "wav",
            Error::Json(_) => "json",
            Error::WouldOverwrite(_) => "would_overwrite",
        }
    }
}
