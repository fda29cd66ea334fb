use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("moment overflow at k = {k}")]
    Overflow { k: usize },
    #[error("degenerate weight: {0}")]
    Degenerate(String),
    #[error(
        "ill-conditioned moment problem at degree {degree} (cancellation estimate {estimate:e})"
    )]
    Conditioning { degree: usize, estimate: f64 },
    #[error("not enough moments: need K = {required}, have K = {available}")]
    OutOfRange { required: usize, available: usize },
    #[error("block split failed: off-block residual {residual:e}, eigenvalue gap {gap:e}")]
    SplitFailure { residual: f64, gap: f64 },
    #[error("inconsistent results: {0}")]
    Inconsistent(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
