//! Simulation and analysis toolkit for server-based distributed gradient
//! descent with Byzantine agents and stragglers.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: quadratic (least-squares) agent costs, the agent roster and
//!   the box-shaped feasible domain.
//! - [`redundancy`]: exact `(f, r; ε)`-redundancy by exhaustive subset
//!   enumeration.
//! - [`aggregation`]: gradient aggregation rules (plain sum, comparative
//!   gradient elimination, stale-gradient sum).
//! - [`engine`]: the round-based server/agent simulator.
//! - [`bounds`]: closed-form convergence constants (μ, γ, α, D, Γ, G, η̄, ρ, M̄).
//! - [`config`] and [`cli`]: JSON run configs and the command-line front end.

pub mod aggregation;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod model;
pub mod redundancy;
pub mod subsets;

pub use error::{Error, Result};
pub use model::{AgentRoster, BoxDomain, FaultKind, RegressionProblem};
