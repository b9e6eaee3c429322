use thiserror::Error;
use xcheck_io::IoError;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error("{0}")]
    Transport(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Transport(_) => EXIT_TRANSPORT,
        }
    }
}

impl From<xcheck_core::Error> for CliError {
    fn from(e: xcheck_core::Error) -> Self {
        match e {
            xcheck_core::Error::InvalidParameter { .. } => CliError::Usage(e.to_string()),
            xcheck_core::Error::Provider(_) => CliError::Transport(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Core(inner) => inner.into(),
            IoError::Transport { .. } | IoError::MalformedResponse(_) | IoError::Range { .. } => {
                CliError::Transport(e.to_string())
            }
            IoError::MissingApiKey(_) | IoError::Config(_) => CliError::Usage(e.to_string()),
            IoError::File { .. } | IoError::Parse { .. } | IoError::MissingField { .. } => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
