use thiserror::Error;

use crate::dsl::{EvalError, ParseError};

/// Errors raised by model construction, estimators and identity checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("out of scope: {0}")]
    OutOfScope(String),

    #[error("invalid box set: {0}")]
    InvalidBox(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("jump size must be nonzero")]
    ZeroJump,

    #[error("repeated or overlapping cells in a multiple integral (cells {0} and {1})")]
    RepeatedCell(usize, usize),

    #[error("coefficient grids live on different partitions")]
    PartitionMismatch,

    #[error("coefficient grid must be symmetrized first")]
    NotSymmetric,

    #[error("partition cell {cell} straddles the conditioning set; refine the partition")]
    StraddlingCell { cell: usize },

    #[error("functional is not F_A-measurable: box `{offending}` is not contained in the conditioning set")]
    NotMeasurable { offending: String },

    #[error("functional reads the terminal value X_T, which is not F_A-measurable for this set")]
    TerminalNotMeasurable,

    #[error("functional is not of the form phi(count(A)): {0}")]
    NotCountProfile(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, Error>;
