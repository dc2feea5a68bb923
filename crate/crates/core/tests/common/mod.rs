#![allow(dead_code)]

use diffsamp_core::theory::{self, build_gamma, build_omega, build_phi, build_sigma, mean_stability_bound};
use diffsamp_core::{monte_carlo, CombinationMatrix, CombinationRule, ScenarioSpec, Topology};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use proptest::test_runner::TestCaseError;

pub fn rule() -> impl Strategy<Value = CombinationRule> {
    prop::sample::select(CombinationRule::ALL.to_vec())
}

pub fn topology(max_nodes: usize) -> impl Strategy<Value = Topology> {
    (1..=max_nodes, 0.05..=1.0f64, any::<u64>())
        .prop_map(|(v, p, seed)| Topology::random_connected(v, p, seed).unwrap())
}

/// A valid spec with `μ` below the mean-square bound of an isolated node.
pub fn spec(max_nodes: usize, max_taps: usize) -> impl Strategy<Value = ScenarioSpec> {
    (
        topology(max_nodes),
        rule(),
        1..=max_taps,
        0.01..0.99f64,
        0.0..=1.0f64,
        0.5..2.0f64,
        any::<u64>(),
    )
        .prop_map(|(t, rule, m, frac, p, s2, seed)| {
            let mu = frac * mean_stability_bound(s2, m);
            ScenarioSpec::new(t, rule, mu, m)
                .with_p_zeta(p)
                .with_sigma_u2(s2)
                .with_noise_range(0.001, 0.1, seed)
                .with_seed(seed)
        })
}

/// Arbitrary left-stochastic matrix supported on the closed neighborhoods.
pub fn random_weights(max_nodes: usize) -> impl Strategy<Value = (Topology, CombinationMatrix)> {
    topology(max_nodes).prop_flat_map(|t| {
        let v = t.node_count();
        prop::collection::vec(0.01..1.0f64, v * v).prop_map(move |raw| {
            let mut c = DMatrix::from_fn(v, v, |i, k| if t.is_adjacent(i, k) { raw[i + k * v] } else { 0.0 });
            for k in 0..v {
                let s: f64 = c.column(k).sum();
                c.column_mut(k).scale_mut(1.0 / s);
            }
            (t.clone(), CombinationMatrix::from_matrix(c))
        })
    })
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

pub fn combination_is_stochastic(t: &Topology, rule: CombinationRule) -> Result<(), TestCaseError> {
    let c = rule.build(t);
    c.validate(t).map_err(|e| TestCaseError::fail(e.to_string()))?;
    for k in 0..t.node_count() {
        let s: f64 = c.as_matrix().column(k).sum();
        check((s - 1.0).abs() <= 1e-12, || format!("column {k} sums to {s}"))?;
    }
    check(c.as_matrix().iter().all(|&x| x >= 0.0), || "negative weight".into())
}

pub fn gamma_is_right_stochastic(c: &CombinationMatrix) -> Result<(), TestCaseError> {
    let g = build_gamma(c);
    check(g.iter().all(|&x| x >= 0.0), || "negative entry in Γ".into())?;
    for r in 0..g.nrows() {
        let s: f64 = g.row(r).sum();
        check((s - 1.0).abs() <= 1e-12, || format!("row {r} of Γ sums to {s}"))?;
    }
    Ok(())
}

pub fn phi_is_nonnegative(spec: &ScenarioSpec) -> Result<(), TestCaseError> {
    let m = theory::ModelMatrices::new(spec);
    check(m.phi.iter().all(|&x| x >= 0.0), || "negative entry in Φ".into())
}

fn unvec(beta: &DVector<f64>, v: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(v, v, beta.as_slice())
}

pub fn step_preserves_symmetry(spec: &ScenarioSpec, seed: u64) -> Result<(), TestCaseError> {
    let m = theory::ModelMatrices::new(spec);
    let v = spec.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(v, v, |_, _| rng.random_range(-1.0..1.0));
    let sym = &a + a.transpose();
    let next = unvec(&m.step(&DVector::from_column_slice(sym.as_slice())), v);
    let gap = (&next - next.transpose()).abs().max();
    check(gap <= 1e-12 * (1.0 + next.abs().max()), || format!("B(n) asymmetric by {gap}"))
}

pub fn beta_stays_nonnegative(spec: &ScenarioSpec, steps: usize) -> Result<(), TestCaseError> {
    let m = theory::ModelMatrices::new(spec);
    let mut beta = m.initial_beta(spec.optimal_norm_sq());
    for n in 0..steps {
        beta = m.step(&beta);
        check(beta.iter().all(|&x| x >= 0.0), || format!("negative β entry at n={n}"))?;
    }
    Ok(())
}

pub fn tau_below_theta(spec: &ScenarioSpec) -> Result<(), TestCaseError> {
    let c = spec.moment_coefficients();
    check(c.tau <= c.theta, || format!("τ={} > θ={}", c.tau, c.theta))
}

pub fn radius_below_theta(spec: &ScenarioSpec) -> Result<(), TestCaseError> {
    let m = theory::ModelMatrices::new(spec);
    let rho = m.spectral_radius().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let theta = m.coefficients.theta;
    check(rho <= theta + 1e-10, || format!("ρ(Φ)={rho} > θ={theta}"))
}

pub fn complete_gamma_is_idempotent(v: usize, rule: CombinationRule) -> Result<(), TestCaseError> {
    let g = build_gamma(&rule.build(&Topology::complete_graph(v).unwrap()));
    let gap = (&g * &g - &g).abs().max();
    check(gap <= 1e-12, || format!("‖Γ² − Γ‖ = {gap} on K_{v}"))
}

pub fn monte_carlo_ignores_workers(spec: &ScenarioSpec, workers: usize) -> Result<(), TestCaseError> {
    let one = monte_carlo(spec, Some(1)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    let many = monte_carlo(spec, Some(workers)).map_err(|e| TestCaseError::fail(e.to_string()))?;
    check(one == many, || format!("results differ between 1 and {workers} workers"))
}

/// Entry `(j, l)` of `Φβ + μ²p_ζMσ_u²σ`, summed term by term.
pub fn scalar_beta_step(
    c: &CombinationMatrix,
    theta: f64,
    tau: f64,
    gain: f64,
    noise: &[f64],
    beta: &DMatrix<f64>,
    j: usize,
    l: usize,
) -> f64 {
    let v = c.node_count();
    let mut total = 0.0;
    for r in 0..v {
        for s in 0..v {
            let coeff = if r == s { theta } else { tau };
            total += c.weight(r, j) * c.weight(s, l) * coeff * beta[(r, s)];
        }
        total += gain * c.weight(r, j) * c.weight(r, l) * noise[r];
    }
    total
}

/// Largest entrywise gap between the matrix step and [`scalar_beta_step`].
pub fn matrix_scalar_gap(c: &CombinationMatrix, spec: &ScenarioSpec, beta: &DMatrix<f64>) -> f64 {
    let v = c.node_count();
    let coeffs = spec.moment_coefficients();
    let gain = spec.mu * spec.mu * spec.p_zeta * spec.filter_length as f64 * spec.sigma_u2;
    let phi = build_phi(&build_gamma(c), &build_omega(&coeffs, v));
    let sigma = build_sigma(c, &spec.noise_variances);
    let next = &phi * DVector::from_column_slice(beta.as_slice()) + sigma * gain;
    let mut gap: f64 = 0.0;
    for j in 0..v {
        for l in 0..v {
            let direct = scalar_beta_step(c, coeffs.theta, coeffs.tau, gain, &spec.noise_variances, beta, j, l);
            gap = gap.max((next[j + l * v] - direct).abs());
        }
    }
    gap
}
