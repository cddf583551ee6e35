use std::path::PathBuf;

use crate::solver::TraceEntry;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{} point(s) at or behind the camera plane (first indices: {:?})", .indices.len(), &.indices[..indices.len().min(8)])]
    BehindCamera { indices: Vec<usize> },

    #[error("silhouette is empty: nothing projects inside the image")]
    EmptySilhouette,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("solver diverged after {} trace entries: {reason}", .trace.len())]
    SolverDiverged { reason: String, trace: Vec<TraceEntry> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse { context: context.into(), message: message.to_string() }
    }
}
