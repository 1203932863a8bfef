use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the crate.
///
/// Variants are grouped so a caller (e.g. the CLI) can map them onto
/// meaningful exit codes: decode failures, missing artifacts and degenerate
/// evaluation sets are distinguished from plain invalid input.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller passed arguments that violate an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Tensor/image dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A numeric invariant broke (NaN/Inf where finite values are required).
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A frame or video could not be decoded.
    #[error("decode error: {0}")]
    Decode(String),

    /// A required artifact (checkpoint, dataset, manifest) is absent.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// An evaluation set contains only one class, so ranking metrics are undefined.
    #[error("single-class evaluation set: {0}")]
    SingleClass(String),

    /// A requested component exists in the registry but is not implemented.
    #[error("not implemented: {0}")]
    Unimplemented(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a path to an `io::Error`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Attach a path to an `image::ImageError`.
    pub fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image { path: path.into(), source }
    }
}
