use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by cause rather than by module so that callers (the
/// CLI and the C bindings in particular) can map them onto a small, stable set
/// of error kinds.
#[derive(Debug, Error)]
pub enum SdmError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("could not find a direction orthogonal to the input after {attempts} attempts")]
    DegenerateDirection { attempts: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl SdmError {
    /// Short machine-readable name of the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            SdmError::Dimension { .. } => "dimension",
            SdmError::Domain(_) => "domain",
            SdmError::Numeric(_) => "numeric",
            SdmError::DegenerateDirection { .. } => "degenerate_direction",
            SdmError::DegenerateFit(_) => "degenerate_fit",
            SdmError::Resource(_) => "resource",
            SdmError::Format { .. } => "format",
            SdmError::Config(_) => "config",
            SdmError::Io(_) => "io",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        SdmError::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, SdmError>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(SdmError::Dimension { expected, actual })
    }
}
