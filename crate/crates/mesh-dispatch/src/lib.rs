//! Decentralized coordination of economic dispatch and demand response in
//! multi-energy systems.
//!
//! Each participant is an energy hub that buys electricity and gas, converts
//! them through transformer / CHP / furnace stages, and serves local
//! electricity and heat demand. Hubs cooperate over a sparse communication
//! graph to minimize total cost minus total utility subject to a global
//! supply–demand coupling, using a parallel ADMM whose per-node multiplier
//! updates are driven by dynamic average tracking of the local imbalances.
//!
//! The crate provides:
//!
//! - [`hub`]: hub data model, the dispatch-factor linearization through
//!   hypothetical gas ports, and the local feasible set;
//! - [`network`]: communication topologies and doubly stochastic
//!   (Metropolis) mixing matrices;
//! - [`solver`]: an interior-point solver for the per-round local
//!   subproblems, with KKT certification;
//! - [`admm`]: the synchronous round engine (tracker, multiplier, and
//!   primal updates) plus its conservation invariant;
//! - [`oracle`]: a centralized dual-decomposition reference solver;
//! - [`analysis`]: run metrics, consensus diagnostics, and a numerical
//!   Lyapunov certificate for the mixing matrix;
//! - [`casegen`]: the built-in 14-bus case study and randomized instances;
//! - [`config`] / [`commands`]: the JSON run configuration and the CLI
//!   entry points built on it.

pub mod admm;
pub mod analysis;
pub mod casegen;
pub mod commands;
pub mod config;
pub mod error;
pub mod hub;
pub mod network;
pub mod oracle;
pub mod solver;

pub use error::Error;
