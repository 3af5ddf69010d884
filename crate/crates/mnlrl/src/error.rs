//! Error types shared across the crate.
//!
//! Variants are grouped so the CLI can map them onto process exit codes:
//! configuration problems exit with 2, numerical failures with 3, and
//! oracle/infeasibility failures with 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid (state, action) pair or out-of-range id.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller handed a non-finite or otherwise malformed argument.
    #[error("argument error: {0}")]
    Argument(String),

    /// Bad experiment/agent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Instance file failed validation; message carries the offending path.
    #[error("instance validation failed: {0}")]
    InstanceValidation(String),

    /// Hard-instance parameters violate a construction precondition.
    #[error("hard-instance precondition violated: {0}")]
    Precondition(String),

    /// Numerical failure inside a linear-algebra routine.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Value/relative-value iteration failed to converge.
    #[error("solver error: {0}")]
    Solver(String),

    /// Diameter iteration hit its sweep cap; the MDP is likely non-communicating.
    #[error("diameter appears infinite: {0}")]
    DiameterInfinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 oracle/infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::InstanceValidation(_) => 2,
            Error::Numerical(_) => 3,
            Error::Solver(_) | Error::DiameterInfinite(_) | Error::Precondition(_) => 4,
            Error::Domain(_) => 2,
            Error::Io(_) | Error::Json(_) => 2,
        }
    }
}
