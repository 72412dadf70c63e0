use thiserror::Error;

use crate::blocked::BlockKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("incomplete matrix: block {0} is missing from the store")]
    IncompleteMatrix(BlockKey),

    #[error("missing block {0}")]
    MissingBlock(BlockKey),

    #[error("write conflict: block {0} already written")]
    WriteConflict(BlockKey),

    #[error("memory budget exceeded: task needs {needed} entries, budget is {budget}")]
    MemoryBudget { needed: u64, budget: u64 },

    #[error("infeasible memory: {0}")]
    InfeasibleMemory(String),

    /// `group` is the row-major index of the output block.
    #[error("insufficient results for group {group}: {got} of {needed} required")]
    InsufficientResults {
        group: usize,
        got: usize,
        needed: usize,
    },

    #[error("recovery failure: blocks {lost:?} cannot be decoded")]
    RecoveryFailure { lost: Vec<(usize, usize)> },

    #[error("relative error undefined for an all-zero reference")]
    UndefinedRelativeError,

    #[error("iterate is not strictly feasible (min slack {0:e})")]
    InfeasibleIterate(f64),

    #[error("sketched Hessian is not positive definite after regularization")]
    HessianDegenerate,

    #[error("line search failed to find an acceptable step")]
    StepFailure,

    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
