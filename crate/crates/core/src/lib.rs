//! Simulation and theory toolkit for adapt-then-combine diffusion LMS
//! networks whose nodes are randomly sampled for adaptation.
//!
//! The crate is organised bottom-up:
//!
//! - [`topology`]: undirected connected graphs with self-inclusive neighborhoods.
//! - [`weights`]: left-stochastic combination matrices (non-cooperative,
//!   uniform, Metropolis).
//! - [`scenario`]: experiment descriptions and their TOML config documents.
//! - [`sim`]: seeded Monte Carlo simulation of the sampled ATC recursion.
//! - [`theory`]: moment coefficients, the `V²×V²` model matrices, exact and
//!   approximate NMSD transients, closed forms and spectral stability.
//! - [`cost`]: expected and tallied multiplication counts.

pub mod cost;
pub mod error;
pub mod scenario;
pub mod sim;
pub mod theory;
pub mod topology;
pub mod weights;

pub use cost::{CostReport, MultiplicationTally};
pub use error::{Error, Result};
pub use scenario::{ScenarioConfig, ScenarioSpec};
pub use sim::{monte_carlo, SimulationResult, Simulator};
pub use theory::{MomentCoefficients, ModelMatrices, Stability, TheoryCurve};
pub use topology::Topology;
pub use weights::{CombinationMatrix, CombinationRule};

/// Power ratio in decibels.
pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
