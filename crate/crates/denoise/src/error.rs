use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A file exists but its contents could not be understood.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] denoise_core::Error),
    /// Per-file failures collected over a directory.
    #[error("{} file(s) failed:\n{}", .0.len(), .0.join("\n"))]
    Batch(Vec<String>),
}

impl Error {
    /// Stable short tag printed before every error message.
    pub fn kind(&self) -> &'static str {
        use denoise_core::Error as C;
        match self {
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Config(_) => "config",
            Error::Batch(_) => "batch",
            Error::Core(e) => match e {
                C::Weights(_) => "weights",
                C::Diverged { .. } | C::NonFinite(_) => "numeric",
                C::IncompatibleSize { .. } | C::ShapeMismatch { .. } | C::ChannelMismatch { .. } => {
                    "shape"
                }
                _ => "core",
            },
        }
    }

    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.as_ref().to_path_buf();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> Error {
        Error::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }
}
