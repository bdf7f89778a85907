//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (dimension mismatch, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The composite symmetry group is too large to enumerate.
    #[error("infeasible brute force: group size {size} exceeds cap {cap}")]
    InfeasibleBruteForce { size: u128, cap: u128 },

    /// A text input could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// An experiment configuration failed validation before any run started.
    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for `Error::Contract` with formatted message.
macro_rules! contract {
    ($cond:expr, $($arg:tt)*) => {
        if !($cond) {
            return Err($crate::error::Error::Contract(format!($($arg)*)));
        }
    };
}
pub(crate) use contract;
