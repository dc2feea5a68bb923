//! Monte Carlo simulation of sampled ATC diffusion LMS.
//!
//! Per iteration every node pushes a fresh white Gaussian input sample into
//! its delay line, draws its sampling decision `ζ_k(n)` and measurement
//! noise, adapts only if sampled, and then every node combines its
//! neighbors' local estimates. Realization `r` draws from its own ChaCha
//! stream, so results do not depend on how realizations are scheduled.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cost::{adaptation_multiplications, combination_multiplications, MultiplicationTally};
use crate::error::{Error, Result};
use crate::scenario::{RngAlgorithm, ScenarioSpec, OPTIMAL_SYSTEM_STREAM, REALIZATION_STREAM_BASE};
use crate::to_db;

/// `‖w_k‖²` above this marks a realization as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Share of the curve averaged by [`steady_state_nmsd`] by default.
pub const DEFAULT_STEADY_STATE_FRACTION: f64 = 0.2;

// Realizations are reduced in index order one block at a time.
const REDUCTION_BLOCK: usize = 64;

/// Unit-norm optimal system with coefficients drawn uniformly in `[-1, 1]`.
pub fn generate_optimal_system(filter_length: usize, seed: u64) -> Vec<f64> {
    assert!(filter_length >= 1, "optimal system needs at least one tap");
    let mut rng = RngAlgorithm::ChaCha8.stream(seed, OPTIMAL_SYSTEM_STREAM);
    loop {
        let w: Vec<f64> = (0..filter_length)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return w.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Mutable state of one realization.
#[derive(Clone, Debug)]
pub struct RealizationState {
    nodes: usize,
    taps: usize,
    combined: Vec<f64>,
    local: Vec<f64>,
    // Each node owns 2M slots; samples are written twice so that
    // `delay[head..head + M]` is always the contiguous regressor.
    delay: Vec<f64>,
    head: usize,
    deviation: Vec<f64>,
    pub iteration: usize,
    pub diverged: bool,
}

impl RealizationState {
    /// Zero estimates and zero-filled delay lines.
    pub fn new(nodes: usize, taps: usize) -> Self {
        RealizationState {
            nodes,
            taps,
            combined: vec![0.0; nodes * taps],
            local: vec![0.0; nodes * taps],
            delay: vec![0.0; nodes * 2 * taps],
            head: 0,
            deviation: vec![0.0; nodes],
            iteration: 0,
            diverged: false,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    /// Combined estimate `w_k(n)`.
    pub fn estimate(&self, k: usize) -> &[f64] {
        &self.combined[k * self.taps..(k + 1) * self.taps]
    }

    pub fn estimate_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.combined[k * self.taps..(k + 1) * self.taps]
    }

    /// `‖w_o − w_k(n)‖²` per node as of the last step.
    pub fn squared_deviation(&self) -> &[f64] {
        &self.deviation
    }

    /// Local estimate `ψ_k(n)`.
    pub fn local_estimate(&self, k: usize) -> &[f64] {
        &self.local[k * self.taps..(k + 1) * self.taps]
    }

    /// Regressor `u_k(n) = [u_k(n), u_k(n-1), …, u_k(n-M+1)]`.
    pub fn regressor(&self, k: usize) -> &[f64] {
        let base = k * 2 * self.taps + self.head;
        &self.delay[base..base + self.taps]
    }

    fn push_inputs(&mut self, inputs: impl Iterator<Item = f64>) {
        let m = self.taps;
        self.head = (self.head + m - 1) % m;
        for (k, x) in inputs.enumerate() {
            let base = k * 2 * m;
            self.delay[base + self.head] = x;
            self.delay[base + self.head + m] = x;
        }
    }
}

/// True when any combined estimate is non-finite or exceeds
/// [`DIVERGENCE_GUARD`] in squared norm.
pub fn detect_divergence(state: &RealizationState) -> bool {
    state.combined.chunks(state.taps.max(1)).any(|w| {
        let sq = dot(w, w);
        !sq.is_finite() || sq > DIVERGENCE_GUARD
    })
}

const LANES: usize = 8;

/// `Σ f(a_j, b_j)` with independent partial sums so the loop vectorizes.
#[inline(always)]
fn pairwise_sum(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] += f(x[l], y[l]);
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| f(x, y)).sum();
    acc.iter().sum::<f64>() + tail
}

const BLOCK: usize = 16;

/// `w = Σ_i c_ik ψ_i`, accumulated block by block in neighbor order.
/// Returns `(‖w‖², ‖w_o − w‖²)`.
#[inline(always)]
fn combine_into(
    w: &mut [f64],
    local: &[f64],
    m: usize,
    incoming: &[(usize, f64)],
    optimal: &[f64],
) -> (f64, f64) {
    let mut start = 0;
    for block in w.chunks_exact_mut(BLOCK) {
        let mut acc = [0.0; BLOCK];
        for &(i, c) in incoming {
            let psi: &[f64; BLOCK] = local[i * m + start..i * m + start + BLOCK].try_into().unwrap();
            for l in 0..BLOCK {
                acc[l] += c * psi[l];
            }
        }
        block.copy_from_slice(&acc);
        start += BLOCK;
    }
    for j in start..m {
        let mut acc = 0.0;
        for &(i, c) in incoming {
            acc += c * local[i * m + j];
        }
        w[j] = acc;
    }
    (
        pairwise_sum(w, w, |x, y| x * y),
        pairwise_sum(w, optimal, |x, o| (o - x) * (o - x)),
    )
}

#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    pairwise_sum(a, b, |x, y| x * y)
}

/// Squared deviations of one realization, `‖w_o − w_k(n)‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizationTrace {
    /// Entry `n` holds one value per node; `n = 0` is the initial state.
    pub squared_deviation: Vec<Vec<f64>>,
    pub diverged: bool,
    /// Iteration at which divergence was detected.
    pub diverged_at: Option<usize>,
    pub tally: MultiplicationTally,
}

impl RealizationTrace {
    /// `(1/V) Σ_k ‖w̃_k(n)‖²` per iteration.
    pub fn node_average(&self) -> Vec<f64> {
        self.squared_deviation
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }
}

/// Precomputed per-scenario constants for the recursion.
#[derive(Clone, Debug)]
pub struct Simulator {
    nodes: usize,
    taps: usize,
    mu: f64,
    input_std: f64,
    noise_std: Vec<f64>,
    sampling: Bernoulli,
    optimal: Vec<f64>,
    incoming: Vec<Vec<(usize, f64)>>,
    neighborhood_sizes: Vec<usize>,
    horizon: usize,
    master_seed: u64,
    rng: RngAlgorithm,
}

impl Simulator {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Simulator {
            nodes: spec.node_count(),
            taps: spec.filter_length,
            mu: spec.mu,
            input_std: spec.sigma_u2.sqrt(),
            noise_std: spec.noise_variances.iter().map(|s| s.sqrt()).collect(),
            sampling: Bernoulli::new(spec.p_zeta)
                .map_err(|e| Error::invalid(format!("p_zeta: {e}")))?,
            optimal: spec.optimal_system.clone(),
            incoming: spec.combination_matrix().incoming(),
            neighborhood_sizes: spec.topology.neighborhood_sizes(),
            horizon: spec.horizon,
            master_seed: spec.master_seed,
            rng: spec.rng,
        })
    }

    pub fn initial_state(&self) -> RealizationState {
        let mut state = RealizationState::new(self.nodes, self.taps);
        let w2 = dot(&self.optimal, &self.optimal);
        state.deviation.fill(w2);
        state
    }

    /// Generator of realization `index`, a pure function of
    /// `(master_seed, index)`.
    pub fn realization_rng(&self, index: usize) -> ChaCha8Rng {
        self.rng
            .stream(self.master_seed, REALIZATION_STREAM_BASE + index as u64)
    }

    /// One adapt-then-combine iteration. Diverged states are left untouched.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &mut RealizationState,
        rng: &mut R,
        tally: &mut MultiplicationTally,
    ) {
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx") {
                // SAFETY: the required CPU feature was detected above.
                return unsafe { self.step_avx(state, rng, tally) };
            }
        }
        self.step_impl(state, rng, tally)
    }

    // Same arithmetic as the portable path (no fused multiply-add), so the
    // results are bit-identical.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx")]
    unsafe fn step_avx<R: Rng + ?Sized>(
        &self,
        state: &mut RealizationState,
        rng: &mut R,
        tally: &mut MultiplicationTally,
    ) {
        self.step_impl(state, rng, tally)
    }

    #[inline(always)]
    fn step_impl<R: Rng + ?Sized>(
        &self,
        state: &mut RealizationState,
        rng: &mut R,
        tally: &mut MultiplicationTally,
    ) {
        if state.diverged {
            return;
        }
        let m = self.taps;
        let input_std = self.input_std;
        state.push_inputs((0..self.nodes).map(|_| input_std * rng.sample::<f64, _>(StandardNormal)));

        for k in 0..self.nodes {
            let sampled = self.sampling.sample(rng);
            let noise = self.noise_std[k] * rng.sample::<f64, _>(StandardNormal);
            let base = k * 2 * m + state.head;
            let u = &state.delay[base..base + m];
            let w = &state.combined[k * m..(k + 1) * m];
            let psi = &mut state.local[k * m..(k + 1) * m];
            if sampled {
                let desired = dot(u, &self.optimal) + noise;
                let error = desired - dot(u, w);
                let gain = self.mu * error;
                for ((p, &wj), &uj) in psi.iter_mut().zip(w).zip(u) {
                    *p = wj + gain * uj;
                }
                tally.multiplications += adaptation_multiplications(m);
            } else {
                psi.copy_from_slice(w);
            }
        }

        let mut diverged = false;
        for k in 0..self.nodes {
            let w = &mut state.combined[k * m..(k + 1) * m];
            let (norm_sq, dev_sq) = combine_into(w, &state.local, m, &self.incoming[k], &self.optimal);
            diverged |= !norm_sq.is_finite() || norm_sq > DIVERGENCE_GUARD;
            state.deviation[k] = dev_sq;
            tally.multiplications += combination_multiplications(m, self.neighborhood_sizes[k]);
        }
        tally.iterations += 1;
        tally.node_iterations += self.nodes as u64;
        state.iteration += 1;
        state.diverged = diverged;
    }

    fn simulate(&self, index: usize, mut record: impl FnMut(&[f64])) -> (bool, Option<usize>, MultiplicationTally) {
        let mut rng = self.realization_rng(index);
        let mut state = self.initial_state();
        let mut tally = MultiplicationTally::default();
        record(state.squared_deviation());
        for n in 1..=self.horizon {
            self.step(&mut state, &mut rng, &mut tally);
            if state.diverged {
                return (true, Some(n), tally);
            }
            record(state.squared_deviation());
        }
        (false, None, tally)
    }

    /// Full per-node trace of realization `index`, truncated at divergence.
    pub fn run_realization(&self, index: usize) -> RealizationTrace {
        let mut squared_deviation = Vec::with_capacity(self.horizon + 1);
        let (diverged, diverged_at, tally) =
            self.simulate(index, |d| squared_deviation.push(d.to_vec()));
        RealizationTrace {
            squared_deviation,
            diverged,
            diverged_at,
            tally,
        }
    }

    fn run_summary(&self, index: usize, per_node: bool) -> RealizationSummary {
        let v = self.nodes as f64;
        let mut average = Vec::with_capacity(self.horizon + 1);
        let mut nodes = Vec::new();
        let (diverged, _, tally) = self.simulate(index, |d| {
            average.push(d.iter().sum::<f64>() / v);
            if per_node {
                nodes.extend_from_slice(d);
            }
        });
        RealizationSummary {
            average,
            nodes,
            diverged,
            tally,
        }
    }
}

struct RealizationSummary {
    average: Vec<f64>,
    nodes: Vec<f64>,
    diverged: bool,
    tally: MultiplicationTally,
}

/// Monte Carlo estimate of the NMSD learning curve.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult {
    /// `NMSD(n)` for `n = 0..=horizon`, averaged over non-diverged
    /// realizations. Empty when every realization diverged.
    pub nmsd: Vec<f64>,
    pub nmsd_db: Vec<f64>,
    /// `MSD_k(n)` per iteration when requested.
    pub msd_per_node: Option<Vec<Vec<f64>>>,
    pub realizations: usize,
    pub diverged: usize,
    pub diverged_fraction: f64,
    /// Default-window steady state, absent when the curve is empty.
    pub steady_state_db: Option<f64>,
    pub tally: MultiplicationTally,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MonteCarloOptions {
    /// Worker threads; `None` uses the machine's parallelism.
    pub workers: Option<usize>,
    pub per_node: bool,
}

/// [`run_monte_carlo`] with default options apart from the worker count.
pub fn monte_carlo(spec: &ScenarioSpec, workers: Option<usize>) -> Result<SimulationResult> {
    run_monte_carlo(
        spec,
        &MonteCarloOptions {
            workers,
            per_node: false,
        },
    )
}

/// Averages `spec.realizations` independent runs.
///
/// Realizations are computed in parallel but summed in index order, so the
/// result is bit-identical for any worker count.
pub fn run_monte_carlo(spec: &ScenarioSpec, options: &MonteCarloOptions) -> Result<SimulationResult> {
    let sim = Simulator::new(spec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::NumericalFailure(format!("cannot start worker pool: {e}")))?;

    let len = spec.horizon + 1;
    let v = spec.node_count();
    let mut sum = vec![0.0; len];
    let mut node_sum = if options.per_node { vec![0.0; len * v] } else { Vec::new() };
    let mut kept = 0usize;
    let mut tally = MultiplicationTally::default();

    let mut start = 0;
    while start < spec.realizations {
        let end = (start + REDUCTION_BLOCK).min(spec.realizations);
        let block: Vec<RealizationSummary> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|r| sim.run_summary(r, options.per_node))
                .collect()
        });
        for summary in &block {
            tally.merge(&summary.tally);
            if summary.diverged {
                continue;
            }
            kept += 1;
            for (acc, x) in sum.iter_mut().zip(&summary.average) {
                *acc += x;
            }
            for (acc, x) in node_sum.iter_mut().zip(&summary.nodes) {
                *acc += x;
            }
        }
        start = end;
    }

    let diverged = spec.realizations - kept;
    let (nmsd, msd_per_node) = if kept == 0 {
        (Vec::new(), options.per_node.then(Vec::new))
    } else {
        let scale = 1.0 / kept as f64;
        let nmsd: Vec<f64> = sum.into_iter().map(|s| s * scale).collect();
        let per_node = options.per_node.then(|| {
            node_sum
                .chunks(v)
                .map(|row| row.iter().map(|s| s * scale).collect())
                .collect()
        });
        (nmsd, per_node)
    };
    let mut result = SimulationResult {
        nmsd_db: nmsd.iter().map(|&x| to_db(x)).collect(),
        nmsd,
        msd_per_node,
        realizations: spec.realizations,
        diverged,
        diverged_fraction: diverged as f64 / spec.realizations as f64,
        steady_state_db: None,
        tally,
    };
    result.steady_state_db = steady_state_nmsd(&result, DEFAULT_STEADY_STATE_FRACTION).ok();
    Ok(result)
}

/// Mean of the last `⌈fraction·len⌉` linear curve values, in dB.
pub fn steady_state_nmsd(result: &SimulationResult, fraction: f64) -> Result<f64> {
    steady_state_of(&result.nmsd, fraction)
}

/// [`steady_state_nmsd`] on a bare linear curve.
pub fn steady_state_of(curve: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    if curve.is_empty() {
        return Err(Error::invalid("empty curve has no steady state"));
    }
    let count = ((fraction * curve.len() as f64).ceil() as usize).clamp(1, curve.len());
    let tail = &curve[curve.len() - count..];
    Ok(to_db(tail.iter().sum::<f64>() / count as f64))
}
