//! Multiplication counts per iteration.
//!
//! A sampled node spends `2M + 1` multiplications adapting (filter output,
//! `μ·e`, and the scaled regressor) and every node spends `M·|N_k|`
//! combining, sampled or not. Additions are not counted.

use serde::Serialize;

use crate::topology::Topology;

/// Adaptation cost of one sampled node: `y = uᵀw`, `μ·e` and `(μe)·u`.
pub fn adaptation_multiplications(filter_length: usize) -> u64 {
    2 * filter_length as u64 + 1
}

/// Combination cost of one node: `Σ c_ik ψ_i` over its neighborhood.
pub fn combination_multiplications(filter_length: usize, neighborhood_size: usize) -> u64 {
    (filter_length * neighborhood_size) as u64
}

/// Expected multiplications at one node per iteration.
pub fn per_node_expected(filter_length: usize, neighborhood_size: usize, p_zeta: f64) -> f64 {
    p_zeta * adaptation_multiplications(filter_length) as f64
        + combination_multiplications(filter_length, neighborhood_size) as f64
}

/// Expected multiplications over the network per iteration,
/// `V·p_ζ·(2M+1) + M·Σ|N_k|`.
pub fn network_expected(t: &Topology, filter_length: usize, p_zeta: f64) -> f64 {
    let total_neighbors: usize = t.neighborhood_sizes().iter().sum();
    network_expected_from_sizes(t.node_count(), total_neighbors, filter_length, p_zeta)
}

/// [`network_expected`] from `V` and `Σ|N_k|` alone.
pub fn network_expected_from_sizes(
    node_count: usize,
    total_neighborhood: usize,
    filter_length: usize,
    p_zeta: f64,
) -> f64 {
    let adapt = (node_count as u64 * adaptation_multiplications(filter_length)) as f64;
    p_zeta * adapt + (filter_length * total_neighborhood) as f64
}

/// Expected multiplications saved per iteration relative to sampling every
/// node, `V·(2M+1)·(1 − p_ζ)`.
pub fn savings_expected(node_count: usize, filter_length: usize, p_zeta: f64) -> f64 {
    (node_count as u64 * adaptation_multiplications(filter_length)) as f64 * (1.0 - p_zeta)
}

/// Multiplications actually performed by a simulation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MultiplicationTally {
    pub multiplications: u64,
    /// Network iterations executed (summed over realizations).
    pub iterations: u64,
    pub node_iterations: u64,
}

impl MultiplicationTally {
    pub fn merge(&mut self, other: &MultiplicationTally) {
        self.multiplications += other.multiplications;
        self.iterations += other.iterations;
        self.node_iterations += other.node_iterations;
    }

    /// Average multiplications per network iteration.
    pub fn per_iteration(&self) -> Option<f64> {
        (self.iterations > 0).then(|| self.multiplications as f64 / self.iterations as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub p_zeta: f64,
    pub per_node_expected: Vec<f64>,
    pub network_expected: f64,
    /// `network_expected` at `p_ζ = 1` minus `network_expected` here.
    pub savings_expected: f64,
    /// Closed-form savings, `V·(2M+1)·(1 − p_ζ)`.
    pub savings_closed_form: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirical_average: Option<f64>,
}

impl CostReport {
    pub fn new(t: &Topology, filter_length: usize, p_zeta: f64) -> Self {
        let per_node_expected: Vec<f64> = t
            .neighborhood_sizes()
            .into_iter()
            .map(|n| per_node_expected(filter_length, n, p_zeta))
            .collect();
        let network = network_expected(t, filter_length, p_zeta);
        CostReport {
            p_zeta,
            per_node_expected,
            network_expected: network,
            savings_expected: network_expected(t, filter_length, 1.0) - network,
            savings_closed_form: savings_expected(t.node_count(), filter_length, p_zeta),
            empirical_average: None,
        }
    }

    pub fn with_tally(mut self, tally: &MultiplicationTally) -> Self {
        self.empirical_average = tally.per_iteration();
        self
    }
}
