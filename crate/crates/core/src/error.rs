use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("unknown tape node {0}")]
    UnknownNode(usize),
    #[error("backward requires a 1x1 loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite stage value at stage {stage}")]
    NonFiniteStage { stage: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate convergence fit: {0}")]
    Degenerate(String),
    #[error("crossing detection needs planar states, got dimension {0}; project to 2-D or skip")]
    NonPlanar(usize),
    #[error("resampling budget of {attempts} attempts exhausted")]
    ResamplingExhausted { attempts: usize },
    #[error("training diverged at iteration {iteration} (last good checkpoint retained)")]
    Diverged {
        iteration: usize,
        /// Serialized checkpoint of the last model with a finite loss.
        checkpoint: String,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
