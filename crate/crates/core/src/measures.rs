//! Gaussian-state quantifiers for the (x₁, p₁, x₂, p₂) covariance matrix.
//!
//! All logarithms are natural.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, block_det, symplectic_form};

/// Roundoff allowance for the negativity discriminant.
pub const DISCRIMINANT_CLAMP: f64 = 1e-12;
/// Roundoff allowance for the fidelity radicands.
pub const RADICAND_CLAMP: f64 = 1e-10;
/// Physicality slack on min eig(σ + iΩ/2), relative to max(1, max|σ|).
pub const PHYSICAL_SLACK: f64 = 1e-9;

/// Measures of one two-mode state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub e_n: f64,
    /// S_{1|2} = max(0, ½ ln(det σ₂ / 4 det σ)).
    pub s_12: f64,
    /// S_{2|1} = max(0, ½ ln(det σ₁ / 4 det σ)).
    pub s_21: f64,
    pub purity: f64,
    /// Smallest symplectic eigenvalue of the partial transpose.
    pub min_symplectic: f64,
}

/// Direction of Gaussian steering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SteeringDirection {
    /// S_{1|2}, uses det σ₂.
    OneGivenTwo,
    /// S_{2|1}, uses det σ₁.
    TwoGivenOne,
}

fn check_two_mode(sigma: &DMatrix<f64>) -> Result<()> {
    linalg::check_dim(sigma, 4)
}

/// Errors unless σ + iΩ/2 ⪰ 0 within [`PHYSICAL_SLACK`].
pub fn check_physical(sigma: &DMatrix<f64>) -> Result<()> {
    linalg::check_square_even(sigma)?;
    let min = linalg::min_physical_eigenvalue(sigma);
    if min < -PHYSICAL_SLACK * sigma.amax().max(1.0) {
        return Err(Error::Unphysical { min_eigenvalue: min });
    }
    Ok(())
}

/// Smallest symplectic eigenvalue of the partial transpose from the
/// invariants Σ = det σ₁ + det σ₂ − 2 det σ₁₂ and det σ.
fn pt_min_symplectic(sigma: &DMatrix<f64>) -> Result<f64> {
    let big = block_det(sigma, 0, 0) + block_det(sigma, 2, 2) - 2.0 * block_det(sigma, 0, 2);
    let det = sigma.determinant();
    let mut disc = big * big - 4.0 * det;
    if disc < 0.0 {
        if disc > -DISCRIMINANT_CLAMP * (big * big).max(1.0) {
            disc = 0.0;
        } else {
            return Err(Error::Unphysical { min_eigenvalue: disc });
        }
    }
    Ok(((big - disc.sqrt()) / 2.0).max(0.0).sqrt())
}

/// Logarithmic negativity max(0, −ln 2ν̃₋).
pub fn log_negativity(sigma: &DMatrix<f64>) -> Result<f64> {
    check_two_mode(sigma)?;
    check_physical(sigma)?;
    let nu = pt_min_symplectic(sigma)?;
    Ok((-(2.0 * nu).ln()).max(0.0))
}

/// Gaussian steering in the given direction.
pub fn steering(sigma: &DMatrix<f64>, direction: SteeringDirection) -> Result<f64> {
    check_two_mode(sigma)?;
    let det = sigma.determinant();
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant(det));
    }
    let local = match direction {
        SteeringDirection::OneGivenTwo => block_det(sigma, 2, 2),
        SteeringDirection::TwoGivenOne => block_det(sigma, 0, 0),
    };
    Ok((0.5 * (local / (4.0 * det)).ln()).max(0.0))
}

/// Purity 1/(2ᴺ √det σ).
pub fn purity(sigma: &DMatrix<f64>) -> Result<f64> {
    linalg::check_square_even(sigma)?;
    let det = sigma.determinant();
    if !(det > 0.0) {
        return Err(Error::NonPositiveDeterminant(det));
    }
    let n = (sigma.nrows() / 2) as i32;
    Ok(1.0 / (2f64.powi(n) * det.sqrt()))
}

/// Fidelity between two zero-mean two-mode Gaussian states,
/// F = (√Θ + √Λ − √((√Θ + √Λ)² − Δ))⁻¹.
pub fn fidelity(sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>) -> Result<f64> {
    check_two_mode(sigma_a)?;
    check_two_mode(sigma_b)?;
    let omega = symplectic_form(2);
    let quarter = DMatrix::<f64>::identity(4, 4) * 0.25;
    let theta = 16.0 * (&omega * sigma_a * &omega * sigma_b - quarter).determinant();
    let half_omega = linalg::to_complex(&omega).map(|z| z * Complex::new(0.0, 0.5));
    let det_a = (linalg::to_complex(sigma_a) + &half_omega).determinant();
    let det_b = (linalg::to_complex(sigma_b) + &half_omega).determinant();
    let lambda = 16.0 * (det_a * det_b).re;
    let delta = (sigma_a + sigma_b).determinant();
    let clamp = |v: f64, scale: f64| -> Result<f64> {
        if v >= 0.0 {
            Ok(v)
        } else if v > -RADICAND_CLAMP * scale.max(1.0) {
            Ok(0.0)
        } else {
            Err(Error::NegativeRadicand(v))
        }
    };
    let theta = clamp(theta, theta.abs().max(delta))?;
    let lambda = clamp(lambda, delta)?;
    let root = theta.sqrt() + lambda.sqrt();
    let inner = clamp(root * root - delta, root * root)?;
    let f = 1.0 / (root - inner.sqrt());
    if f > 1.0 && f < 1.0 + 1e-9 {
        return Ok(1.0);
    }
    Ok(f)
}

fn spectrum_of(sigma: &DMatrix<f64>) -> Vec<f64> {
    let n = sigma.nrows() / 2;
    let mut moduli: Vec<f64> = linalg::eigenvalues(&(symplectic_form(n) * sigma))
        .iter()
        .map(|z| z.norm())
        .collect();
    moduli.sort_by(|a, b| a.total_cmp(b));
    moduli.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Symplectic eigenvalues of σ (moduli of the eigenvalues of iΩσ), ascending.
pub fn symplectic_spectrum(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    linalg::check_square_even(sigma)?;
    Ok(spectrum_of(sigma))
}

/// Symplectic eigenvalues of the partial transpose with respect to the
/// last mode (its momentum sign flipped), ascending.
pub fn partial_transpose_spectrum(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    linalg::check_square_even(sigma)?;
    let n = sigma.nrows();
    let mut pt = sigma.clone();
    for i in 0..n {
        pt[(n - 1, i)] = -pt[(n - 1, i)];
    }
    for i in 0..n {
        pt[(i, n - 1)] = -pt[(i, n - 1)];
    }
    Ok(spectrum_of(&pt))
}

/// All measures of a physical two-mode state.
pub fn compute_measures(sigma: &DMatrix<f64>) -> Result<MeasureSet> {
    check_two_mode(sigma)?;
    check_physical(sigma)?;
    let min_symplectic = pt_min_symplectic(sigma)?;
    Ok(MeasureSet {
        e_n: (-(2.0 * min_symplectic).ln()).max(0.0),
        s_12: steering(sigma, SteeringDirection::OneGivenTwo)?,
        s_21: steering(sigma, SteeringDirection::TwoGivenOne)?,
        purity: purity(sigma)?,
        min_symplectic,
    })
}
