//! Spectral radius and mean-square stability classification.

use nalgebra::{DMatrix, DVector, Schur};
use rayon::prelude::*;
use serde::Serialize;

use super::{build_gamma, build_omega, build_phi, MomentCoefficients};
use crate::error::{Error, Result};
use crate::scenario::ScenarioSpec;

/// Largest order handled by the dense eigenvalue path.
pub const DENSE_LIMIT: usize = 4096;
/// Relative tolerance of the power iteration.
pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 100_000;
/// Half-width of the band around 1 reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Marginal,
    Unstable,
}

impl Stability {
    pub fn classify(spectral_radius: f64) -> Self {
        if spectral_radius < 1.0 - MARGINAL_BAND {
            Stability::Stable
        } else if spectral_radius > 1.0 + MARGINAL_BAND {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Marginal => "marginal",
            Stability::Unstable => "unstable",
        }
    }
}

/// Maximum eigenvalue modulus.
///
/// Dense real Schur decomposition up to [`DENSE_LIMIT`]; above that the
/// matrix must be entrywise nonnegative and its Perron root is found by
/// [`perron_root`].
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::invalid(format!(
            "spectral radius of a {}×{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() <= DENSE_LIMIT {
        dense_spectral_radius(m)
    } else {
        perron_root(m)
    }
}

pub fn dense_spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("matrix has non-finite entries".into()));
    }
    // The QR iteration occasionally stalls; the transpose has the same
    // spectrum and a different iteration path.
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 1000 * n)
        .or_else(|| Schur::try_new(m.transpose(), f64::EPSILON, 1000 * n));
    match schur {
        Some(schur) => Ok(schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)),
        None if m.iter().all(|&x| x >= 0.0) => perron_root(m),
        None => Err(Error::NumericalFailure(format!(
            "real Schur iteration did not converge (order {n}, Frobenius norm {:.6e})",
            m.norm()
        ))),
    }
}

/// Perron root of an entrywise nonnegative matrix.
///
/// Power iteration on `A + I` (the shift makes the Perron eigenvalue
/// strictly dominant even for periodic matrices), stopped when the
/// Collatz–Wielandt bounds agree to [`POWER_TOL`] or, for reducible
/// matrices whose bounds never meet, when the Rayleigh-type estimate has
/// stopped moving by the iteration cap.
pub fn perron_root(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::invalid("perron root of a non-square matrix"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::invalid("perron root needs a finite nonnegative matrix"));
    }
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut y = DVector::zeros(n);
    let mut estimate = f64::NAN;
    let mut last_change = f64::INFINITY;
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..POWER_MAX_ITER {
        y.gemv(1.0, m, &x, 0.0);
        y += &x;
        lo = f64::INFINITY;
        hi = 0.0;
        for (yi, xi) in y.iter().zip(x.iter()) {
            let r = yi / xi;
            lo = f64::min(lo, r);
            hi = f64::max(hi, r);
        }
        if hi - lo <= POWER_TOL * hi {
            return Ok((0.5 * (lo + hi) - 1.0).max(0.0));
        }
        let next = y.sum() / x.sum();
        last_change = (next - estimate).abs();
        estimate = next;
        let scale = y.sum();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::NumericalFailure("power iteration overflowed".into()));
        }
        x.copy_from(&y);
        x /= scale;
    }
    if last_change <= POWER_TOL * estimate {
        Ok((estimate - 1.0).max(0.0))
    } else {
        Err(Error::NumericalFailure(format!(
            "power iteration did not converge in {POWER_MAX_ITER} steps \
             (bounds [{:.9}, {:.9}], last change {last_change:.3e})",
            lo - 1.0,
            hi - 1.0
        )))
    }
}

/// `ρ(Φ)` for each sampling probability in `grid`, in grid order.
pub fn stability_sweep(spec: &ScenarioSpec, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    validate_grid(grid)?;
    let gamma = build_gamma(&spec.combination_matrix());
    let v = spec.node_count();
    grid.par_iter()
        .map(|&p| {
            let coeffs = MomentCoefficients::new(spec.mu, p, spec.sigma_u2, spec.filter_length);
            let phi = build_phi(&gamma, &build_omega(&coeffs, v));
            spectral_radius(&phi).map(|rho| (p, rho))
        })
        .collect()
}

pub(crate) fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("sampling-probability grid is empty"));
    }
    if let Some(p) = grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("grid value {p} outside [0, 1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_radii() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((dense_spectral_radius(&rot).unwrap() - 2.0).abs() < 1e-12);
        let upper = DMatrix::from_row_slice(3, 3, &[0.5, 9.0, 1.0, 0.0, -0.7, 3.0, 0.0, 0.0, 0.2]);
        assert!((dense_spectral_radius(&upper).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(dense_spectral_radius(&DMatrix::from_element(1, 1, -0.3)).unwrap(), 0.3);
    }

    #[test]
    fn perron_root_handles_periodic_and_reducible() {
        // Permutation: eigenvalues are the cube roots of unity.
        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!((perron_root(&perm).unwrap() - 1.0).abs() < 1e-7);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.9, 0.5]));
        assert!((perron_root(&diag).unwrap() - 0.9).abs() < 1e-7);
        let neg = DMatrix::from_element(2, 2, -1.0);
        assert!(perron_root(&neg).is_err());
    }

    #[test]
    fn perron_root_agrees_with_dense_on_positive_matrices() {
        let m = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 10.0 + 0.01);
        let dense = dense_spectral_radius(&m).unwrap();
        let power = perron_root(&m).unwrap();
        assert!((dense - power).abs() <= 1e-7 * dense);
    }

    #[test]
    fn classification_band() {
        assert_eq!(Stability::classify(0.999), Stability::Stable);
        assert_eq!(Stability::classify(1.0 + 1e-12), Stability::Marginal);
        assert_eq!(Stability::classify(1.0 - 1e-12), Stability::Marginal);
        assert_eq!(Stability::classify(1.01), Stability::Unstable);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0.5, 1.1]).is_err());
        assert!(validate_grid(&[0.0, 1.0]).is_ok());
    }
}
