use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// `exit_code` groups them the way the CLI reports them: validation
/// problems (bad inputs, unsupported model combinations) versus
/// infeasibility (a budget/grid that cannot produce a meaningful
/// estimate).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tail underflow evaluating survival at x = {x:e}")]
    TailUnderflow { x: f64 },

    #[error("moment condition violated: {0}")]
    MomentDivergence(String),

    #[error("exact tail unavailable: {0}")]
    ExactTailUnavailable(String),

    #[error("infeasible grid point x = {x}: expected hits {expected_hits:.1} < 100")]
    InfeasibleGrid { x: f64, expected_hits: f64 },

    #[error("zero reference tail at x = {x}")]
    ZeroReferenceTail { x: f64 },
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InfeasibleGrid { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
