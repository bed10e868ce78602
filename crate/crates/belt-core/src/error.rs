//! Error type shared by all pipeline stages.

use thiserror::Error;

/// Errors produced by the completion pipeline and its supporting operations.
#[derive(Debug, Clone, Error)]
pub enum BeltError {
    /// An input violated a structural contract (shape, symmetry, ordering,
    /// emptiness, parameter range).
    #[error("validation: {0}")]
    Validation(String),

    /// A stated precondition of an operation does not hold for these inputs.
    #[error("precondition: {0}")]
    Precondition(String),

    /// A numerical routine failed (non-convergence, loss of positivity).
    #[error("numerical: {0}")]
    Numerical(String),

    /// Random generation could not produce a usable draw.
    #[error("generation: {0}")]
    Generation(String),

    /// Completion left entries that no source pair with sufficient overlap
    /// can estimate. `uncovered` holds up to the first few offending global
    /// entity pairs; `total` counts all of them.
    #[error("completion: {total} entries coverable by no source pair with sufficient overlap (first: {uncovered:?})")]
    Completion {
        uncovered: Vec<(usize, usize)>,
        total: usize,
    },
}

impl BeltError {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        BeltError::Validation(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        BeltError::Precondition(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        BeltError::Numerical(msg.into())
    }

    pub(crate) fn generation(msg: impl Into<String>) -> Self {
        BeltError::Generation(msg.into())
    }
}
