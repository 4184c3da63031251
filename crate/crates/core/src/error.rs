use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("grid {height}x{width} is too small, both sides must be at least 3")]
    GridTooSmall { height: usize, width: usize },
    #[error("index ({row}, {col}) is outside a {height}x{width} grid")]
    IndexError {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeError { expected: usize, found: usize },
    #[error("non-finite coefficient while assembling row {row}")]
    AssemblyError { row: usize },
    #[error("zero pivot at index {index} (value {pivot:e})")]
    SingularSystem { index: usize, pivot: f64 },
    #[error("policy iteration stopped after {iterations} iterations with error {error:e}")]
    NotConverged { iterations: usize, error: f64 },
    #[error("trajectory became non-finite at step {step}")]
    DivergedTrajectory { step: usize },
    #[error("numerical error in {context}{}", epoch.map(|e| alloc::format!(" at epoch {e}")).unwrap_or_default())]
    NumericalError {
        context: &'static str,
        epoch: Option<usize>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
