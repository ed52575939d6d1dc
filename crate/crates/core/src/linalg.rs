//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Symplectic form ⊕_j [[0, 1], [−1, 0]] for `n_modes` modes.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for j in 0..n_modes {
        omega[(2 * j, 2 * j + 1)] = 1.0;
        omega[(2 * j + 1, 2 * j)] = -1.0;
    }
    omega
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn check_square_even(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || !m.nrows().is_multiple_of(2) || m.nrows() == 0 {
        return Err(Error::Dimension {
            expected: m.nrows().max(2) / 2 * 2,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub fn check_dim(m: &DMatrix<f64>, expected: usize) -> Result<()> {
    if m.nrows() != expected || m.ncols() != expected {
        return Err(Error::Dimension {
            expected,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Eigenvalues of a real square matrix.
///
/// Delegates to faer: nalgebra's real Schur iteration has no iteration
/// bound and stalls on some of the block-structured drift matrices here.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let n = a.nrows();
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    m.eigenvalues().expect("eigenvalue iteration failed to converge")
}

fn to_faer(m: &DMatrix<Complex<f64>>) -> faer::Mat<faer::c64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values (descending) and right singular vectors (columns of V)
/// of a complex matrix.
pub fn complex_svd(m: &DMatrix<Complex<f64>>) -> Option<(Vec<f64>, DMatrix<Complex<f64>>)> {
    let svd = to_faer(m).svd().ok()?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let v = svd.V();
    Some((s, DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)])))
}

/// Singular values of a complex matrix.
pub fn complex_singular_values(m: &DMatrix<Complex<f64>>) -> Option<Vec<f64>> {
    to_faer(m).singular_values().ok()
}

pub fn spectral_abscissa(spectrum: &[Complex<f64>]) -> f64 {
    spectrum.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the Hermitian matrix σ + iΩ/2.
///
/// Computed through the real symmetric embedding [[X, −Y], [Y, X]] of
/// X + iY, whose spectrum is that of X + iY with doubled multiplicity.
pub fn min_physical_eigenvalue(sigma: &DMatrix<f64>) -> f64 {
    let n = sigma.nrows();
    let y = symplectic_form(n / 2) * 0.5;
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(sigma);
    big.view_mut((n, n), (n, n)).copy_from(sigma);
    big.view_mut((0, n), (n, n)).copy_from(&(-&y));
    big.view_mut((n, 0), (n, n)).copy_from(&y);
    big.symmetric_eigenvalues().min()
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

/// Determinant of a 2×2 block starting at (`r`, `c`).
pub fn block_det(m: &DMatrix<f64>, r: usize, c: usize) -> f64 {
    m[(r, c)] * m[(r + 1, c + 1)] - m[(r, c + 1)] * m[(r + 1, c)]
}
