//! Shared fixtures for the benchmarks.

use diffsamp_core::{CombinationRule, ScenarioSpec, Topology};

/// Seeded connected graph with `nodes` nodes, Metropolis weights and
/// `taps`-tap filters.
pub fn fixture(nodes: usize, taps: usize) -> ScenarioSpec {
    let t = Topology::random_connected(nodes, 0.25, 4).expect("valid graph parameters");
    ScenarioSpec::new(t, CombinationRule::Metropolis, 0.01, taps)
        .with_noise_range(0.001, 0.01, 7)
        .with_p_zeta(0.5)
}
