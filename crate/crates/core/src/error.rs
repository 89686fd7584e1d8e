use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model/layer configuration that cannot be built or shape-checked.
    #[error("configuration error in layer `{layer}`: {msg}")]
    Layer { layer: String, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Operand shapes do not fit together. Promoted to [`Error::Layer`] once
    /// the owning layer is known.
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: String },

    #[error("autodiff error: {0}")]
    Autodiff(String),

    #[error("numerical error: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("cannot decode image {path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{what} version mismatch: file has version {found}, this build supports version {expected}")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the layer name to shape and configuration errors.
    pub fn in_layer(self, layer: &str) -> Self {
        match self {
            Error::Shape(msg) | Error::Config(msg) => Error::Layer {
                layer: layer.to_string(),
                msg,
            },
            other => other,
        }
    }

    /// True for errors caused by invalid user input or configuration, as
    /// opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Layer { .. }
                | Error::Config(_)
                | Error::Shape(_)
                | Error::Manifest { .. }
                | Error::Data(_)
                | Error::Version { .. }
                | Error::Json(_)
        )
    }
}
