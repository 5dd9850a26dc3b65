use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the numerical core.
///
/// Every variant is a validation or domain failure; the CLI maps all of
/// them to exit code 2.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unphysical parameters: {0}")]
    UnphysicalParameters(String),
    #[error("degenerate channel: transmission is zero, no signal reaches the relay")]
    DegenerateChannel,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("covariance matrix is not in standard two-mode form: {0}")]
    InvalidForm(String),
    #[error("unphysical matrix: {0}")]
    UnphysicalMatrix(String),
    #[error("divergent information: {0}")]
    DivergentInformation(String),
    #[error("insufficient data: need at least {needed} pulses, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("indeterminate phase: interference outputs carry no phase information")]
    IndeterminatePhase,
}
