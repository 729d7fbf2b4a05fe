use thiserror::Error;

/// Errors raised by the inference engine and its harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments to a library call (bad index, wrong length, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    /// A combination of options the engine cannot honour.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A statistic requested on too little (or degenerate) input.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable kind, used in the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Unsupported(_) => "unsupported",
            Error::UndefinedStatistic(_) => "undefined-statistic",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 config, 3 data, 4 runtime numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Unsupported(_) | Error::InvalidInput(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) | Error::UndefinedStatistic(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(e.to_string())
    }
}
