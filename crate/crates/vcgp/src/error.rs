use thiserror::Error;

/// Crate-wide error type. Variants map onto the stable error kinds the CLI
/// reports in its machine-parsable error line.
#[derive(Debug, Error)]
pub enum VcgpError {
    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl VcgpError {
    /// Stable machine-readable kind identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            VcgpError::Dim(_) => "dim",
            VcgpError::Invalid(_) => "invalid",
            VcgpError::Numeric(_) => "numeric",
            VcgpError::Config(_) => "config",
            VcgpError::Format(_) => "format",
            VcgpError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, VcgpError>;
