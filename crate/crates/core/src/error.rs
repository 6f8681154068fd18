use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("reference calibration failed: {0}")]
    Calibration(String),
    #[error("reconstruction diverged: {0}")]
    Divergence(String),
    #[error("segmentation failed: {0}")]
    Segmentation(String),
    #[error("feature `{feature}` undefined: {reason}")]
    FeatureUndefined {
        feature: &'static str,
        reason: String,
    },
    #[error("zero-variance column `{0}`")]
    DegenerateColumn(String),
    #[error("insufficient rows: need at least {needed}, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
