//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by model construction, solvers, and the CLI layer.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain precondition was violated (bad parameter value, empty hub
    /// list, dimension mismatch, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A topology failed a structural requirement (disconnected graph,
    /// self-loop, node id out of range, ...).
    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    /// A hub's local feasible set is empty, or the hubs are jointly unable
    /// to balance supply and demand.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative solver exhausted its iteration budget before reaching
    /// the requested accuracy.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A numerical operation broke down (singular system, non-finite
    /// intermediate value).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Configuration file rejected before any computation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Filesystem or serialization failure while reading configs or
    /// writing reports.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }

    pub(crate) fn topology(msg: impl Into<String>) -> Self {
        Error::InvalidTopology(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
