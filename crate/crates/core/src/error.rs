use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mask error: {0}")]
    Mask(String),

    #[error("inpaint error: {0}")]
    Inpaint(String),

    #[error("backend error: {message}\n{diagnostics}")]
    Backend { message: String, diagnostics: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed{}: {source}", patch.map(|(r, c)| format!(" on patch ({r}, {c})")).unwrap_or_default())]
    Stage {
        stage: String,
        patch: Option<(usize, usize)>,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}` requires stage `{missing}` to be completed first")]
    Prerequisite { stage: String, missing: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Image {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str, patch: Option<(usize, usize)>) -> Self {
        match self {
            e @ (Error::Stage { .. } | Error::Prerequisite { .. }) => e,
            e => Error::Stage {
                stage: stage.to_string(),
                patch,
                source: Box::new(e),
            },
        }
    }
}
