use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("volume has no surface to sample")]
    EmptySurface,
    #[error("kit spec error: {0}")]
    Spec(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("workspace full: could not place object {object} after {attempts} attempts")]
    WorkspaceFull { object: usize, attempts: usize },
    #[error("not graspable: {0}")]
    NotGraspable(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Short machine-readable code, used by the HTTP layer and CLIs.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::OutOfBounds(_) => "out_of_bounds",
            Error::NotFound(_) => "not_found",
            Error::EmptyInput(_) => "empty_input",
            Error::EmptySurface => "empty_surface",
            Error::Spec(_) => "spec_error",
            Error::Placement(_) => "placement_error",
            Error::WorkspaceFull { .. } => "workspace_full",
            Error::NotGraspable(_) => "not_graspable",
            Error::Format { .. } => "format_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "format_error",
        }
    }
}
