//! Mean-square transient and steady-state models.
//!
//! `β(n)` is the column-major vectorization of `B(n)`, where
//! `B_ij(n) = E{w̃_iᵀ(n) w̃_j(n)}`; entry `(i, j)` sits at `i + j·V`
//! (0-based). It obeys
//!
//! ```text
//! β(n) = Φ β(n-1) + μ² p_ζ M σ_u² σ,     Φ = Ω ⊙ Γ,   Γ = (C ⊗ C)ᵀ
//! NMSD(n) = bᵀ β(n) / V,                 b = vec(I_V)
//! ```
//!
//! with `β(0) = ‖w_o‖² 1` for zero-initialized estimates. Ω carries `θ` in
//! the columns that multiply diagonal entries `β_tt(n-1)` and `τ`
//! elsewhere. Duplicated entries (`β_ij = β_ji`) are kept.

mod spectral;

pub use spectral::{
    dense_spectral_radius, perron_root, spectral_radius, stability_sweep, Stability, DENSE_LIMIT,
    MARGINAL_BAND,
};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scenario::ScenarioSpec;
use crate::to_db;
use crate::weights::CombinationMatrix;

/// Second-order moment coefficients of the sampled adaptation step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentCoefficients {
    /// Multiplies same-node terms; includes the Gaussian
    /// fourth-moment factor `M + 2`.
    pub theta: f64,
    /// Multiplies cross-node terms.
    pub tau: f64,
}

impl MomentCoefficients {
    /// `θ = 1 − 2μp_ζσ_u² + μ²p_ζσ_u⁴(M+2)`, `τ = (1 − μp_ζσ_u²)²`.
    pub fn new(mu: f64, p_zeta: f64, sigma_u2: f64, filter_length: usize) -> Self {
        let a = mu * p_zeta * sigma_u2;
        let tau = (1.0 - a) * (1.0 - a);
        let theta = 1.0 - 2.0 * a + mu * mu * p_zeta * sigma_u2 * sigma_u2 * (filter_length as f64 + 2.0);
        MomentCoefficients { theta, tau }
    }
}

/// `2 / ((M + 2) σ_u²)`: step sizes below it make `θ < 1` for any `p_ζ > 0`.
pub fn mean_stability_bound(sigma_u2: f64, filter_length: usize) -> f64 {
    2.0 / ((filter_length as f64 + 2.0) * sigma_u2)
}

/// Position of `β_ij` in `β`.
#[inline]
pub fn vec_index(i: usize, j: usize, node_count: usize) -> usize {
    i + j * node_count
}

/// `Γ = (C ⊗ C)ᵀ`, so that `Γ vec(B) = vec(Cᵀ B C)`.
pub fn build_gamma(c: &CombinationMatrix) -> DMatrix<f64> {
    c.as_matrix().kronecker(c.as_matrix()).transpose()
}

/// `V²×V²` matrix equal to `θ` in the columns of diagonal `β_tt` entries
/// and `τ` elsewhere.
pub fn build_omega(coeffs: &MomentCoefficients, node_count: usize) -> DMatrix<f64> {
    let n = node_count * node_count;
    DMatrix::from_fn(n, n, |_, col| {
        if col % (node_count + 1) == 0 {
            coeffs.theta
        } else {
            coeffs.tau
        }
    })
}

/// `Φ = Ω ⊙ Γ`.
pub fn build_phi(gamma: &DMatrix<f64>, omega: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(gamma.shape(), omega.shape(), "Γ and Ω must have the same shape");
    gamma.component_mul(omega)
}

/// `σ = vec(Cᵀ R_v C)` with `R_v = diag(σ_v_k²)`; entry `(j, l)` is
/// `Σ_z c_zj c_zl σ_v_z²`.
pub fn build_sigma(c: &CombinationMatrix, noise_variances: &[f64]) -> DVector<f64> {
    let cm = c.as_matrix();
    assert_eq!(cm.nrows(), noise_variances.len(), "one noise variance per node");
    let rv = DMatrix::from_diagonal(&DVector::from_column_slice(noise_variances));
    let s = cm.transpose() * rv * cm;
    DVector::from_column_slice(s.as_slice())
}

/// `b = vec(I_V)`.
pub fn build_b(node_count: usize) -> DVector<f64> {
    let mut b = DVector::zeros(node_count * node_count);
    for i in 0..node_count {
        b[vec_index(i, i, node_count)] = 1.0;
    }
    b
}

/// Everything the exact recursion needs for one scenario.
#[derive(Clone, Debug)]
pub struct ModelMatrices {
    pub node_count: usize,
    pub coefficients: MomentCoefficients,
    pub gamma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub b: DVector<f64>,
    /// `μ² p_ζ M σ_u²`.
    pub noise_gain: f64,
}

impl ModelMatrices {
    pub fn new(spec: &ScenarioSpec) -> Self {
        let c = spec.combination_matrix();
        let coefficients = spec.moment_coefficients();
        let v = spec.node_count();
        let gamma = build_gamma(&c);
        let omega = build_omega(&coefficients, v);
        let phi = build_phi(&gamma, &omega);
        ModelMatrices {
            node_count: v,
            coefficients,
            gamma,
            omega,
            phi,
            sigma: build_sigma(&c, &spec.noise_variances),
            b: build_b(v),
            noise_gain: noise_gain(spec),
        }
    }

    /// `β(0) = ‖w_o‖² 1`.
    pub fn initial_beta(&self, optimal_norm_sq: f64) -> DVector<f64> {
        DVector::from_element(self.node_count * self.node_count, optimal_norm_sq)
    }

    /// One step `Φ β + μ² p_ζ M σ_u² σ`, written into `out`.
    pub fn step_into(&self, beta: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.sigma);
        out.gemv(1.0, &self.phi, beta, self.noise_gain);
    }

    pub fn step(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(beta.len());
        self.step_into(beta, &mut out);
        out
    }

    /// `bᵀ β / V`.
    pub fn nmsd(&self, beta: &DVector<f64>) -> f64 {
        (0..self.node_count)
            .map(|i| beta[vec_index(i, i, self.node_count)])
            .sum::<f64>()
            / self.node_count as f64
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(&self.phi)
    }
}

fn noise_gain(spec: &ScenarioSpec) -> f64 {
    spec.mu * spec.mu * spec.p_zeta * spec.filter_length as f64 * spec.sigma_u2
}

/// A steady-state value in both scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    pub linear: f64,
    pub db: f64,
}

impl SteadyState {
    pub fn from_linear(linear: f64) -> Self {
        SteadyState {
            linear,
            db: to_db(linear),
        }
    }
}

/// A model-predicted learning curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryCurve {
    /// `NMSD(n)` for `n = 0..=N`, shorter if the model overflowed.
    pub nmsd: Vec<f64>,
    pub nmsd_db: Vec<f64>,
    /// Present iff the model is stable.
    pub steady_state: Option<SteadyState>,
    /// Spectral radius of the matrix driving the model.
    pub spectral_radius: f64,
    /// Set when iteration stopped early on non-finite values.
    pub truncated: bool,
}

impl TheoryCurve {
    fn new(nmsd: Vec<f64>, steady_state: Option<SteadyState>, spectral_radius: f64, truncated: bool) -> Self {
        TheoryCurve {
            nmsd_db: nmsd.iter().map(|&x| to_db(x)).collect(),
            nmsd,
            steady_state,
            spectral_radius,
            truncated,
        }
    }
}

/// Iterates `β(n) = Φβ(n-1) + μ²p_ζMσ_u²σ` from `β(0) = ‖w_o‖² 1`.
pub fn exact_nmsd_curve(spec: &ScenarioSpec, horizon: usize) -> Result<TheoryCurve> {
    let model = ModelMatrices::new(spec);
    let rho = model.spectral_radius()?;
    let mut beta = model.initial_beta(spec.optimal_norm_sq());
    let mut next = beta.clone();
    let mut nmsd = Vec::with_capacity(horizon + 1);
    nmsd.push(model.nmsd(&beta));
    let mut truncated = false;
    for _ in 0..horizon {
        model.step_into(&beta, &mut next);
        std::mem::swap(&mut beta, &mut next);
        let value = model.nmsd(&beta);
        if !value.is_finite() {
            truncated = true;
            break;
        }
        nmsd.push(value);
    }
    let steady = match Stability::classify(rho) {
        Stability::Stable => exact_steady_state_with(&model, rho).ok(),
        _ => None,
    };
    Ok(TheoryCurve::new(nmsd, steady, rho, truncated))
}

/// `(μ²p_ζMσ_u²/V) bᵀ (I − Φ)⁻¹ σ`, by a linear solve.
pub fn exact_steady_state(spec: &ScenarioSpec) -> Result<SteadyState> {
    let model = ModelMatrices::new(spec);
    let rho = model.spectral_radius()?;
    exact_steady_state_with(&model, rho)
}

fn exact_steady_state_with(model: &ModelMatrices, rho: f64) -> Result<SteadyState> {
    if Stability::classify(rho) != Stability::Stable {
        return Err(Error::NotStable { spectral_radius: rho });
    }
    let n = model.phi.nrows();
    let system = DMatrix::identity(n, n) - &model.phi;
    let x = system
        .lu()
        .solve(&model.sigma)
        .ok_or(Error::NotStable { spectral_radius: rho })?;
    Ok(SteadyState::from_linear(model.noise_gain * model.nmsd(&x)))
}

/// Cooperative approximation `Φ ≈ τΓ`:
///
/// ```text
/// NMSD_τ(n) = ‖w_o‖² τⁿ + (μ²p_ζMσ_u²/V) bᵀ (I − τΓ)⁻¹ (I − τⁿΓⁿ) σ
/// ```
///
/// evaluated as `s − τⁿ Γⁿ s` with `s = (I − τΓ)⁻¹ σ` (the inverse commutes
/// with `Γⁿ`). For `τ ≥ 1` it falls back to iterating `β ← τΓβ + μ²p_ζMσ_u²σ`.
pub fn approx_nmsd_curve(spec: &ScenarioSpec, horizon: usize) -> Result<TheoryCurve> {
    let c = spec.combination_matrix();
    let v = spec.node_count();
    let tau = spec.moment_coefficients().tau;
    let gamma = build_gamma(&c);
    let sigma = build_sigma(&c, &spec.noise_variances);
    let gain = noise_gain(spec);
    let w2 = spec.optimal_norm_sq();
    let diagonal_mean = |x: &DVector<f64>| (0..v).map(|i| x[vec_index(i, i, v)]).sum::<f64>() / v as f64;

    let mut nmsd = Vec::with_capacity(horizon + 1);
    let mut truncated = false;
    if tau < 1.0 {
        let s = solve_shifted(&gamma, tau, &sigma)?;
        let s_mean = diagonal_mean(&s);
        let mut z = s.clone();
        let mut scratch = z.clone();
        let mut tau_n = 1.0;
        for n in 0..=horizon {
            if n > 0 {
                scratch.gemv(1.0, &gamma, &z, 0.0);
                std::mem::swap(&mut z, &mut scratch);
                tau_n *= tau;
            }
            nmsd.push(w2 * tau_n + gain * (s_mean - tau_n * diagonal_mean(&z)));
        }
        let steady = SteadyState::from_linear(gain * s_mean);
        return Ok(TheoryCurve::new(nmsd, Some(steady), tau, false));
    }

    let mut beta = DVector::from_element(v * v, w2);
    let mut next = beta.clone();
    nmsd.push(diagonal_mean(&beta));
    for _ in 0..horizon {
        next.copy_from(&sigma);
        next.gemv(tau, &gamma, &beta, gain);
        std::mem::swap(&mut beta, &mut next);
        let value = diagonal_mean(&beta);
        if !value.is_finite() {
            truncated = true;
            break;
        }
        nmsd.push(value);
    }
    Ok(TheoryCurve::new(nmsd, None, tau, truncated))
}

/// `(μ²p_ζMσ_u²/V) bᵀ (I − τΓ)⁻¹ σ`; requires `τ < 1`.
pub fn approx_steady_state(spec: &ScenarioSpec) -> Result<SteadyState> {
    let tau = spec.moment_coefficients().tau;
    if tau >= 1.0 {
        return Err(Error::NotStable { spectral_radius: tau });
    }
    let c = spec.combination_matrix();
    let v = spec.node_count();
    let s = solve_shifted(&build_gamma(&c), tau, &build_sigma(&c, &spec.noise_variances))?;
    let mean = (0..v).map(|i| s[vec_index(i, i, v)]).sum::<f64>() / v as f64;
    Ok(SteadyState::from_linear(noise_gain(spec) * mean))
}

fn solve_shifted(gamma: &DMatrix<f64>, tau: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = gamma.nrows();
    let system = DMatrix::identity(n, n) - gamma * tau;
    system
        .lu()
        .solve(rhs)
        .ok_or(Error::NotStable { spectral_radius: tau })
}

/// Steady-state NMSD of isolated nodes,
/// `χ_nc = μM / (2 − μσ_u²(M+2)) · mean(σ_v_k²)`. Independent of `p_ζ`.
pub fn noncoop_steady_state(mu: f64, filter_length: usize, sigma_u2: f64, noise_variances: &[f64]) -> f64 {
    let mean = noise_variances.iter().sum::<f64>() / noise_variances.len() as f64;
    chi_lms(mu, filter_length, sigma_u2, mean)
}

/// Single-filter LMS steady-state MSD, `μMσ_v² / (2 − μσ_u²(M+2))`.
pub fn chi_lms(mu: f64, filter_length: usize, sigma_u2: f64, sigma_v2: f64) -> f64 {
    let m = filter_length as f64;
    mu * m * sigma_v2 / (2.0 - mu * sigma_u2 * (m + 2.0))
}

/// `NMSD_nc(n) = (‖w_o‖² − χ_nc) θⁿ + χ_nc` for the non-cooperative
/// scheme, whatever rule `spec` names. With `p_ζ = 0` nothing is learned
/// and the curve stays at `‖w_o‖²`.
pub fn noncoop_closed_form(spec: &ScenarioSpec, horizon: usize) -> Result<TheoryCurve> {
    let w2 = spec.optimal_norm_sq();
    if spec.p_zeta == 0.0 {
        return Ok(TheoryCurve::new(vec![w2; horizon + 1], None, 1.0, false));
    }
    let theta = spec.moment_coefficients().theta;
    if theta >= 1.0 {
        return Err(Error::NotStable { spectral_radius: theta });
    }
    let chi = noncoop_steady_state(spec.mu, spec.filter_length, spec.sigma_u2, &spec.noise_variances);
    let nmsd = (0..=horizon)
        .map(|n| (w2 - chi) * theta.powi(n as i32) + chi)
        .collect();
    Ok(TheoryCurve::new(nmsd, Some(SteadyState::from_linear(chi)), theta, false))
}

/// Steady state of the cooperative approximation on `K_V`,
/// `χ_KV = μM / (2 − μp_ζσ_u²) · Σσ_v_k² / V²`.
pub fn kv_closed_form(
    node_count: usize,
    mu: f64,
    p_zeta: f64,
    sigma_u2: f64,
    filter_length: usize,
    noise_variances: &[f64],
) -> Result<SteadyState> {
    if node_count == 0 || noise_variances.len() != node_count {
        return Err(Error::invalid("need one noise variance per node"));
    }
    if !(p_zeta > 0.0 && p_zeta <= 1.0) {
        return Err(Error::invalid(format!("p_zeta = {p_zeta} outside (0, 1]")));
    }
    if mu * p_zeta * sigma_u2 >= 2.0 {
        return Err(Error::invalid(format!(
            "mu·p_zeta·sigma_u2 = {} must be below 2",
            mu * p_zeta * sigma_u2
        )));
    }
    let v = node_count as f64;
    let total: f64 = noise_variances.iter().sum();
    Ok(SteadyState::from_linear(
        mu * filter_length as f64 / (2.0 - mu * p_zeta * sigma_u2) * total / (v * v),
    ))
}

/// Fully sampled steady state with step `μp_ζ` from the sampled one with
/// step `μ` on `K_V`: `NMSD_sync(∞) = p_ζ · NMSD_async(∞)`.
pub fn sync_async_relation(async_steady: f64, p_zeta: f64) -> Result<f64> {
    if !(p_zeta > 0.0 && p_zeta <= 1.0) {
        return Err(Error::invalid(format!("p_zeta = {p_zeta} outside (0, 1]")));
    }
    Ok(p_zeta * async_steady)
}
