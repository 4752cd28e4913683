use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// A network definition violates a structural invariant.
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// A parameter left the physically meaningful region (non-positive RC product or heater gain).
    #[error("physics violation: {0}")]
    PhysicsViolation(String),

    /// A caller broke a documented precondition (shapes, ranges, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A factorization or decomposition could not be completed.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// Preheat sizing could not reach the occupied set point.
    #[error("zone {zone} cannot reach {target} F with full heat at {ext_temp} F outside")]
    Unreachable { zone: String, target: f64, ext_temp: f64 },

    /// Scenario or network configuration problem.
    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
