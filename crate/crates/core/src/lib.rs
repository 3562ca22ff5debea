//! A principal who privately knows which event occurred issues probabilistic
//! predictions of a binary outcome to an agent who best-responds as if the
//! predictions were calibrated. The solvers here maximize the principal's
//! expected utility subject to a budget on the expected calibration error
//! (ECE).
//!
//! * [`model`]: instances, predictors, best responses, κ, ECE, payoffs.
//! * [`lp`]: dense two-phase simplex used by every solver.
//! * [`exact`]: optimal predictors for the ℓ₁ and ℓ∞ ECE.
//! * [`fptas`]: near-optimal predictors for any ℓt ECE on a two-layer grid.
//! * [`structure`]: diagnostics for event-independent instances.
//! * [`oracle`]: brute-force cross-checks.

pub mod error;
pub mod exact;
pub mod fixtures;
pub mod fptas;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod structure;

pub use error::{Error, Result};
pub use model::{
    agent_payoff, best_response, ece, ece_power, indirect_utility, kappa, payoff,
    validate_instance, AgentResponse, Instance, Norm, Predictor, RawInstance,
};
