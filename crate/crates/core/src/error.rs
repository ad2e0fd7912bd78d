use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::code`] gives a stable machine-readable reason that the CLI
/// prints to stderr.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed header token `{token}`")]
    Format { token: String },
    #[error("truncated payload in frame {frame}")]
    Truncated { frame: usize },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("duplicate frame index {frame}")]
    Duplicate { frame: usize },
    #[error("line {line}: json parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: schema violation: {msg}")]
    Schema { line: usize, msg: String },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("bitstream error: {0}")]
    Bitstream(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("ground truth does not cover frame {frame}")]
    Coverage { frame: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Format { .. } => "format",
            Error::Truncated { .. } => "truncated",
            Error::Unsupported(_) => "unsupported",
            Error::Duplicate { .. } => "duplicate",
            Error::Parse { .. } => "parse",
            Error::Schema { .. } => "schema",
            Error::Invalid(_) => "invalid",
            Error::Bitstream(_) => "bitstream",
            Error::EmptyInput(_) => "empty_input",
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::Contract(_) => "contract",
            Error::Infeasible(_) => "infeasible",
            Error::Coverage { .. } => "coverage",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
