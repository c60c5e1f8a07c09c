use std::path::PathBuf;

use crate::denoiser::protocol::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("audio file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}: multichannel unsupported ({channels} channels)", path.display())]
    Multichannel { path: PathBuf, channels: u16 },

    #[error("{}: unsupported encoding ({detail})", path.display())]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("{}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("denoiser protocol error at step {step}: {source}")]
    Protocol {
        step: usize,
        #[source]
        source: ProtocolError,
    },

    #[error(
        "schedule too small: sigma_T = {sigma_max} < {sigma_bar} required by spectral component {component}"
    )]
    ScheduleTooSmall {
        component: usize,
        sigma_max: f64,
        sigma_bar: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Shape(_) | Error::InvalidInput(_) => 2,
            Error::MissingFile(_)
            | Error::Multichannel { .. }
            | Error::UnsupportedEncoding { .. }
            | Error::Wav { .. }
            | Error::Io(_) => 3,
            Error::Protocol { .. } => 4,
            Error::ScheduleTooSmall { .. } | Error::Numerical(_) => 5,
        }
    }
}
