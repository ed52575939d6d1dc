//! Covariance evolution: Lyapunov steady states, the conditional Riccati
//! flow under homodyne detection, stability analysis and ensemble
//! covariances under state-based feedback.

use std::ops::Deref;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, symmetrize};
use crate::matrices::{build_drift, Channel, FeedbackGains, SystemMatrices};
use crate::model::SystemParams;

/// Relative tolerance for physicality checks on computed states.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Riccati fixed-point criterion: ‖dσ/dt‖_F / rate scale below this times max(1, ‖σ‖_F).
pub const RICCATI_TOL: f64 = 1e-12;
/// Frobenius norm beyond which the Riccati flow is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Detectability threshold on |Cᵀx| relative to ‖C‖.
pub const DETECTABILITY_TOL: f64 = 1e-10;

/// Real symmetric quadrature covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    sigma: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps `sigma`, symmetrizing away roundoff. Rejects non-square or odd
    /// dimensions and matrices that are visibly asymmetric.
    pub fn new(mut sigma: DMatrix<f64>) -> Result<Self> {
        linalg::check_square_even(&sigma)?;
        let asym = linalg::max_asymmetry(&sigma);
        if asym > 1e-9 * sigma.amax().max(1.0) {
            return Err(Error::invalid("sigma", format!("not symmetric (max |σ − σᵀ| = {asym:.3e})")));
        }
        symmetrize(&mut sigma);
        Ok(Self { sigma })
    }

    pub(crate) fn from_symmetric(sigma: DMatrix<f64>) -> Self {
        Self { sigma }
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self::thermal(&vec![0.0; n_modes])
    }

    pub fn thermal(n_bar: &[f64]) -> Self {
        let diag: Vec<f64> = n_bar.iter().flat_map(|n| [n + 0.5, n + 0.5]).collect();
        Self {
            sigma: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        }
    }

    /// Two-mode squeezed vacuum with squeezing parameter r.
    pub fn two_mode_squeezed(r: f64) -> Self {
        let c = (2.0 * r).cosh() / 2.0;
        let s = (2.0 * r).sinh() / 2.0;
        Self {
            sigma: DMatrix::from_row_slice(
                4,
                4,
                &[c, 0.0, s, 0.0, 0.0, c, 0.0, -s, s, 0.0, c, 0.0, 0.0, -s, 0.0, c],
            ),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.sigma
    }

    pub fn n_modes(&self) -> usize {
        self.sigma.nrows() / 2
    }

    /// Smallest eigenvalue of σ + iΩ/2; non-negative for physical states.
    pub fn min_physical_eigenvalue(&self) -> f64 {
        linalg::min_physical_eigenvalue(&self.sigma)
    }

    pub fn is_physical(&self) -> bool {
        self.min_physical_eigenvalue() >= -PHYSICAL_TOL * self.sigma.amax().max(1.0)
    }
}

impl Deref for CovarianceMatrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.sigma
    }
}

/// ‖Aσ + σAᵀ + D‖_F / ‖D‖_F (absolute when D = 0).
pub fn lyapunov_residual(a: &DMatrix<f64>, d: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    let r = (a * sigma + sigma * a.transpose() + d).norm();
    let scale = d.norm();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

/// Solves Aσ + σAᵀ + D = 0 by vectorisation, (I⊗A + A⊗I) vec σ = −vec D.
pub fn solve_lyapunov(a: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<CovarianceMatrix> {
    linalg::check_square_even(a)?;
    let n = a.nrows();
    linalg::check_dim(d, n)?;
    let spectrum = linalg::eigenvalues(a);
    let max_re = linalg::spectral_abscissa(&spectrum);
    if !(max_re < 0.0) {
        return Err(Error::UnstableDrift { max_re, spectrum });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let big = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(d.as_slice());
    let x = big.lu().solve(&rhs).ok_or_else(|| Error::UnstableDrift {
        max_re,
        spectrum: spectrum.clone(),
    })?;
    let mut sigma = DMatrix::from_column_slice(n, n, x.as_slice());
    symmetrize(&mut sigma);
    Ok(CovarianceMatrix { sigma })
}

/// dσ/dt = Aσ + σAᵀ + D − Σ (σb − f)(σb − f)ᵀ.
pub fn riccati_rhs(drift: &DMatrix<f64>, diffusion: &DMatrix<f64>, channels: &[Channel], sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let half = drift * sigma;
    let mut out = &half + half.transpose();
    out += diffusion;
    for ch in channels {
        let g = ch.gain(sigma);
        out -= &g * g.transpose();
    }
    out
}

/// ‖Riccati right-hand side‖_F / ‖D‖_F at `sigma`.
pub fn riccati_residual(mats: &SystemMatrices, sigma: &DMatrix<f64>) -> f64 {
    let r = riccati_rhs(&mats.drift, &mats.diffusion, &mats.channels(), sigma).norm();
    r / mats.diffusion.norm().max(f64::MIN_POSITIVE)
}

/// Default integration step 10⁻³/Γ̃_max.
pub fn default_dt(mats: &SystemMatrices) -> f64 {
    1e-3 / mats.max_linewidth()
}

/// Sampled covariance trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<CovarianceMatrix>,
}

impl RiccatiTrajectory {
    pub fn last(&self) -> &CovarianceMatrix {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

fn rk4_step(mats: &SystemMatrices, channels: &[Channel], sigma: &DMatrix<f64>, k1: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let f = |s: &DMatrix<f64>| riccati_rhs(&mats.drift, &mats.diffusion, channels, s);
    let k2 = f(&(sigma + k1 * (h / 2.0)));
    let k3 = f(&(sigma + &k2 * (h / 2.0)));
    let k4 = f(&(sigma + &k3 * h));
    let mut next = sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    symmetrize(&mut next);
    next
}

/// Fixed-step RK4 integration of the conditional covariance flow.
///
/// The step is shrunk slightly so that an integer number of steps reaches
/// `t_final`; every `sample_every`-th state (and the final one) is kept.
pub fn integrate_riccati(
    mats: &SystemMatrices,
    sigma0: &CovarianceMatrix,
    dt: f64,
    t_final: f64,
    sample_every: usize,
) -> Result<RiccatiTrajectory> {
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::invalid("dt", "dt must be positive and t_final non-negative"));
    }
    linalg::check_dim(sigma0, mats.dim())?;
    let channels = mats.channels();
    let steps = (t_final / dt).ceil() as usize;
    let h = if steps > 0 { t_final / steps as f64 } else { 0.0 };
    let every = sample_every.max(1);
    let mut sigma = sigma0.sigma.clone();
    let mut out = RiccatiTrajectory {
        times: vec![0.0],
        states: vec![sigma0.clone()],
    };
    for n in 1..=steps {
        let k1 = riccati_rhs(&mats.drift, &mats.diffusion, &channels, &sigma);
        sigma = rk4_step(mats, &channels, &sigma, &k1, h);
        let norm = sigma.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::ConditionalDivergence { t: n as f64 * h, norm });
        }
        if n % every == 0 || n == steps {
            out.times.push(n as f64 * h);
            out.states.push(CovarianceMatrix::from_symmetric(sigma.clone()));
        }
    }
    Ok(out)
}

/// Options for the conditional fixed-point search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyOptions {
    /// Step as a fraction of 1/(‖A‖_F + Σ‖b‖²).
    pub dt_factor: f64,
    pub tol: f64,
    /// Give up at this many multiples of 1/Γ̃_min.
    pub max_time_factor: f64,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        Self {
            dt_factor: 0.2,
            tol: RICCATI_TOL,
            max_time_factor: 1e4,
        }
    }
}

/// Fixed point of the conditional flow with integration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub sigma: CovarianceMatrix,
    pub t: f64,
    pub steps: usize,
    pub dt: f64,
    /// Final ‖dσ/dt‖_F / rate scale.
    pub rate: f64,
}

fn rate_scale(mats: &SystemMatrices, channels: &[Channel]) -> f64 {
    mats.drift.norm() + channels.iter().map(|c| c.b.norm_squared()).sum::<f64>()
}

/// Conditional steady state with default options.
pub fn steady_conditional(mats: &SystemMatrices) -> Result<CovarianceMatrix> {
    Ok(steady_conditional_with(mats, &SteadyOptions::default())?.sigma)
}

/// Marches the Riccati flow from the unconditional steady state (vacuum if
/// the drift is unstable) until ‖dσ/dt‖_F / s < tol · max(1, ‖σ‖_F), with s
/// the rate scale ‖A‖_F + Σ‖b‖². A blow-up is retried twice with a smaller
/// step before it is reported.
pub fn steady_conditional_with(mats: &SystemMatrices, opts: &SteadyOptions) -> Result<SteadyState> {
    let channels = mats.channels();
    let start = match solve_lyapunov(&mats.drift, &mats.diffusion) {
        Ok(s) => s.sigma,
        Err(Error::UnstableDrift { .. }) => {
            if !mats.is_measured() {
                let spectrum = linalg::eigenvalues(&mats.drift);
                return Err(Error::UnstableDrift {
                    max_re: linalg::spectral_abscissa(&spectrum),
                    spectrum,
                });
            }
            CovarianceMatrix::vacuum(mats.dim() / 2).sigma
        }
        Err(e) => return Err(e),
    };
    let scale = rate_scale(mats, &channels);
    let t_max = opts.max_time_factor / mats.min_linewidth();
    let mut dt = opts.dt_factor / scale;
    let mut last_err = None;
    for _attempt in 0..3 {
        match march(mats, &channels, &start, dt, scale, t_max, opts.tol) {
            Ok(s) => return Ok(s),
            Err(e @ Error::ConditionalDivergence { .. }) => {
                last_err = Some(e);
                dt /= 4.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("loop runs at least once"))
}

fn march(
    mats: &SystemMatrices,
    channels: &[Channel],
    start: &DMatrix<f64>,
    dt: f64,
    scale: f64,
    t_max: f64,
    tol: f64,
) -> Result<SteadyState> {
    let mut sigma = start.clone();
    let mut t = 0.0;
    let mut steps = 0usize;
    loop {
        let k1 = riccati_rhs(&mats.drift, &mats.diffusion, channels, &sigma);
        let norm = sigma.norm();
        let rate = k1.norm() / scale;
        if rate < tol * norm.max(1.0) {
            return Ok(SteadyState {
                sigma: CovarianceMatrix::from_symmetric(sigma),
                t,
                steps,
                dt,
                rate,
            });
        }
        if t >= t_max {
            return Err(Error::NoFixedPoint { t, rate });
        }
        sigma = rk4_step(mats, channels, &sigma, &k1, dt);
        t += dt;
        steps += 1;
        let norm = sigma.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::ConditionalDivergence { t, norm });
        }
    }
}

/// Unstable eigenpair of Ã that the measurement cannot see.
#[derive(Debug, Clone, PartialEq)]
pub struct OffendingMode {
    pub xi: Complex<f64>,
    /// Smallest singular value of C restricted to the eigenspace, relative to ‖C‖.
    pub observability: f64,
    pub vector: DVector<Complex<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub unconditional_stable: bool,
    pub conditional_stable: bool,
    /// Eigenvalues of A.
    pub spectrum: Vec<Complex<f64>>,
    /// Eigenvalues of Ã = A + Σ f bᵀ.
    pub conditional_spectrum: Vec<Complex<f64>>,
    pub offending_modes: Vec<OffendingMode>,
}

/// Unconditional stability of A and detectability of the measured flow.
///
/// For each eigenvalue ξ of Ã with Re ξ ≥ 0 the eigenspace is taken as the
/// numerical null space of Ã − ξI. The pair is offending when the stacked
/// channel vectors leave some direction of that space unobserved. Because
/// detectability is unchanged by output injection, a stable A always gives
/// a conditionally stable flow.
pub fn check_stability(mats: &SystemMatrices) -> StabilityReport {
    let spectrum = linalg::eigenvalues(&mats.drift);
    let unconditional_stable = linalg::spectral_abscissa(&spectrum) < 0.0;
    let at = mats.conditional_drift();
    let conditional_spectrum = linalg::eigenvalues(&at);
    let channels = mats.channels();
    let n = mats.dim();
    let rows: Vec<_> = channels.iter().filter(|c| c.b.amax() > 0.0).map(|c| c.b.transpose()).collect();
    let cmat = if rows.is_empty() {
        None
    } else {
        Some(linalg::to_complex(&DMatrix::from_rows(&rows)))
    };
    let cnorm = cmat.as_ref().map(|c| c.norm()).unwrap_or(0.0);
    let at_c = linalg::to_complex(&at);
    let mut offending: Vec<OffendingMode> = Vec::new();
    let mut seen: Vec<Complex<f64>> = Vec::new();
    let spread = at.norm().max(1.0);
    for &xi in &conditional_spectrum {
        if xi.re < 0.0 || seen.iter().any(|s| (s - xi).norm() < 1e-8 * spread) {
            continue;
        }
        seen.push(xi);
        let m = &at_c - DMatrix::<Complex<f64>>::identity(n, n) * xi;
        let Some((s, v)) = linalg::complex_svd(&m) else {
            offending.push(OffendingMode {
                xi,
                observability: f64::NAN,
                vector: DVector::zeros(n),
            });
            continue;
        };
        let smax = s.iter().copied().fold(0.0, f64::max);
        let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
        let cut = (1e-7 * smax).max(smin);
        let idx: Vec<usize> = (0..s.len()).filter(|&i| s[i] <= cut).collect();
        let null = DMatrix::from_fn(n, idx.len(), |r, c| v[(r, idx[c])]);
        let observability = match &cmat {
            Some(c) => {
                let cn = c * &null;
                if cn.nrows() < cn.ncols() {
                    0.0
                } else {
                    linalg::complex_singular_values(&cn).map_or(0.0, |v| v.iter().copied().fold(f64::INFINITY, f64::min)) / cnorm
                }
            }
            None => 0.0,
        };
        if observability <= DETECTABILITY_TOL {
            offending.push(OffendingMode {
                xi,
                observability,
                vector: null.column(0).into_owned(),
            });
        }
    }
    let conditional_stable = unconditional_stable || offending.is_empty();
    StabilityReport {
        unconditional_stable,
        conditional_stable,
        spectrum,
        conditional_spectrum,
        offending_modes: offending,
    }
}

/// Which modes carry the amplifier term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpaKind {
    /// K̃₁ = K̃₂ = K̃.
    Symmetric,
    /// K̃₁ = K̃, K̃₂ = 0.
    Asymmetric,
}

impl MpaKind {
    pub fn apply(self, params: &SystemParams, k: f64) -> SystemParams {
        match self {
            MpaKind::Symmetric => params.with_k_tilde(k, k),
            MpaKind::Asymmetric => params.with_k_tilde(k, 0.0),
        }
    }
}

/// Phase regime of the closed-form thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdCase {
    /// kd = sπ.
    Integer,
    /// kd = (s + 1/2)π.
    HalfInteger,
}

impl KdCase {
    pub fn kd(self) -> f64 {
        match self {
            KdCase::Integer => 0.0,
            KdCase::HalfInteger => std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Closed-form upper bound on K̃ for a stable drift, for equal intrinsic
/// damping κ, zero detuning and chirality D at fixed Γ_R.
pub fn threshold_k(params: &SystemParams, kind: MpaKind, case: KdCase) -> Result<f64> {
    let (k1, k2) = (params.mode_1.kappa, params.mode_2.kappa);
    if (k1 - k2).abs() > 1e-12 * k1.max(k2) {
        return Err(Error::UnequalDamping {
            kappa_1: k1,
            kappa_2: k2,
        });
    }
    let kappa = k1;
    let gr = params.coupling.gamma_r;
    let d = params.coupling.chirality()?;
    if !(d > -1.0) {
        return Err(Error::invalid("D", "closed-form thresholds need Γ_R > 0"));
    }
    let p = 1.0 + d;
    let q = 1.0 - d;
    let cross = q * gr * gr / (kappa * p + 2.0 * gr);
    Ok(match (kind, case) {
        (MpaKind::Symmetric, KdCase::Integer) => kappa / 4.0 + (1.0 - (1.0 - d * d).max(0.0).sqrt()) * gr / (2.0 * p),
        (MpaKind::Asymmetric, KdCase::Integer) => kappa / 4.0 + gr / (2.0 * p) - cross,
        (MpaKind::Symmetric, KdCase::HalfInteger) => {
            ((kappa * p + 2.0 * gr).powi(2) + 4.0 * (1.0 - d * d) * gr * gr).sqrt() / (4.0 * p)
        }
        (MpaKind::Asymmetric, KdCase::HalfInteger) => kappa / 4.0 + gr / (2.0 * p) + cross,
    })
}

fn drift_abscissa(params: &SystemParams, kind: MpaKind, k: f64) -> f64 {
    linalg::spectral_abscissa(&linalg::eigenvalues(&build_drift(&kind.apply(params, k))))
}

/// Smallest K̃ at which the drift loses stability, located by a coarse scan
/// followed by bisection to relative width `rel_tol`.
pub fn numeric_threshold(params: &SystemParams, kind: MpaKind, rel_tol: f64) -> Result<f64> {
    params.validate()?;
    if drift_abscissa(params, kind, 0.0) >= 0.0 {
        return Err(Error::invalid("K_tilde", "drift is unstable without amplification"));
    }
    let step = (params.mode_1.kappa + params.mode_2.kappa + params.coupling.total()) / 400.0;
    let mut lo = 0.0;
    let mut hi = step;
    let mut found = false;
    for _ in 0..100_000 {
        if drift_abscissa(params, kind, hi) >= 0.0 {
            found = true;
            break;
        }
        lo = hi;
        hi += step;
    }
    if !found {
        return Err(Error::invalid("K_tilde", "no stability threshold found"));
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if drift_abscissa(params, kind, mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Covariance of the filtered means (σ̄_e) and the ensemble covariance
/// σ_e = σ_c + σ̄_e under feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCovariance {
    pub conditional: CovarianceMatrix,
    pub mean_cov: DMatrix<f64>,
    pub ensemble: CovarianceMatrix,
}

/// Ensemble covariance with σ_c obtained from [`steady_conditional`].
pub fn ensemble_covariance(mats: &SystemMatrices, gains: &FeedbackGains) -> Result<EnsembleCovariance> {
    let sigma_c = steady_conditional(mats)?;
    ensemble_covariance_from(mats, &sigma_c, gains)
}

/// Solves Ā σ̄_e + σ̄_e Āᵀ + Σ (σ_c b − f)(σ_c b − f)ᵀ = 0 with Ā the
/// feedback-modified drift.
pub fn ensemble_covariance_from(
    mats: &SystemMatrices,
    sigma_c: &CovarianceMatrix,
    gains: &FeedbackGains,
) -> Result<EnsembleCovariance> {
    gains.validate()?;
    let n = mats.dim();
    let a_bar = crate::matrices::apply_feedback(&mats.drift, gains);
    let mut source = DMatrix::zeros(n, n);
    for ch in mats.channels() {
        let g = ch.gain(sigma_c);
        source += &g * g.transpose();
    }
    let mean_cov = solve_lyapunov(&a_bar, &source)?.sigma;
    let ensemble = CovarianceMatrix::from_symmetric(&sigma_c.sigma + &mean_cov);
    Ok(EnsembleCovariance {
        conditional: sigma_c.clone(),
        mean_cov,
        ensemble,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{build_diffusion, BackactionScaling, ChannelMode, MeasurementConfig};
    use crate::model::{mhz, MagnonMode, WaveguideCoupling};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(d: f64, kd: f64, k: f64, kind: MpaKind) -> SystemParams {
        let mode = MagnonMode::new(1e10, mhz(1.0));
        let p = SystemParams::new(mode, mode, WaveguideCoupling::from_chirality(mhz(10.0), d, kd).unwrap()).unwrap();
        kind.apply(&p, k)
    }

    #[test]
    fn thermal_lyapunov() {
        let kappa = 3.0;
        let n = 0.7;
        let a = DMatrix::identity(4, 4) * (-kappa / 2.0);
        let d = DMatrix::identity(4, 4) * (kappa * (n + 0.5));
        let s = solve_lyapunov(&a, &d).unwrap();
        assert!((s.matrix() - DMatrix::identity(4, 4) * (n + 0.5)).amax() < 1e-14);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let a = DMatrix::identity(2, 2) * 0.1;
        let err = solve_lyapunov(&a, &DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::UnstableDrift { .. }));
    }

    #[test]
    fn lyapunov_matches_time_integration() {
        let p = params(0.5, 0.8, mhz(0.3), MpaKind::Symmetric);
        let mats = SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap();
        let exact = solve_lyapunov(&mats.drift, &mats.diffusion).unwrap();
        let slowest = -linalg::spectral_abscissa(&linalg::eigenvalues(&mats.drift));
        let traj = integrate_riccati(&mats, &CovarianceMatrix::vacuum(2), default_dt(&mats), 20.0 / slowest, 1_000_000).unwrap();
        assert!((traj.last().matrix() - exact.matrix()).norm() < 1e-6);
    }

    #[test]
    fn riccati_is_fourth_order() {
        let p = params(0.5, 0.8, mhz(0.5), MpaKind::Asymmetric);
        let m = MeasurementConfig::new(0.8, 1.0, 0.4, 0.1).unwrap();
        let mats = SystemMatrices::new(&p, &m).unwrap();
        let s0 = CovarianceMatrix::vacuum(2);
        let t = 0.2 / mhz(1.0);
        let h = 0.02 / mhz(10.0);
        let end = |dt: f64| integrate_riccati(&mats, &s0, dt, t, usize::MAX).unwrap().last().matrix().clone();
        let a = end(h);
        let b = end(h / 2.0);
        let c = end(h / 4.0);
        let slope = ((&a - &b).norm() / (&b - &c).norm()).log2();
        assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn unmeasured_conditional_equals_lyapunov() {
        let p = params(0.75, 0.3, mhz(0.2), MpaKind::Symmetric);
        let mats = SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap();
        let a = steady_conditional(&mats).unwrap();
        let b = solve_lyapunov(&mats.drift, &mats.diffusion).unwrap();
        assert!((a.matrix() - b.matrix()).norm() < 1e-8);
    }

    #[test]
    fn measured_steady_state_is_fixed_point() {
        let p = params(0.5, 0.4, mhz(0.4), MpaKind::Symmetric);
        let m = MeasurementConfig::new(1.0, 1.0, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        for scaling in [BackactionScaling::Sme, BackactionScaling::FullRate] {
            let mats = SystemMatrices::with_options(&p, &m, scaling, ChannelMode::PerChannel).unwrap();
            let s = steady_conditional(&mats).unwrap();
            assert!(riccati_residual(&mats, &s) < 1e-10);
            assert!(s.is_physical());
            let open = solve_lyapunov(&mats.drift, &mats.diffusion).unwrap();
            assert!(crate::measures::purity(&s).unwrap() >= crate::measures::purity(&open).unwrap());
        }
    }

    #[test]
    fn measurement_stabilises_beyond_threshold() {
        let base = params(0.0, 0.0, 0.0, MpaKind::Symmetric);
        let k = 1.05 * threshold_k(&base, MpaKind::Symmetric, KdCase::Integer).unwrap();
        let p = MpaKind::Symmetric.apply(&base, k);
        let open = SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap();
        let rep = check_stability(&open);
        assert!(!rep.unconditional_stable);
        assert!(!rep.conditional_stable);
        assert!(!rep.offending_modes.is_empty());
        let meas = SystemMatrices::new(&p, &MeasurementConfig::new(0.0, 1.0, 0.0, 0.0).unwrap()).unwrap();
        let rep = check_stability(&meas);
        assert!(!rep.unconditional_stable);
        if rep.conditional_stable {
            let s = steady_conditional(&meas).unwrap();
            assert!(s.is_physical());
            assert!(riccati_residual(&meas, &s) < 1e-10);
        }
    }

    #[test]
    fn unmeasured_stable_report() {
        let p = params(0.3, 1.0, mhz(0.1), MpaKind::Symmetric);
        let rep = check_stability(&SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap());
        assert!(rep.unconditional_stable && rep.conditional_stable);
        assert!(rep.offending_modes.is_empty());
    }

    #[test]
    fn closed_form_threshold_examples() {
        let kappa = mhz(1.0);
        let gr = mhz(10.0);
        let sym0 = threshold_k(&params(0.0, 0.0, 0.0, MpaKind::Symmetric), MpaKind::Symmetric, KdCase::Integer).unwrap();
        assert_eq!(sym0, kappa / 4.0);
        let p1 = params(1.0, 0.0, 0.0, MpaKind::Symmetric);
        let s = threshold_k(&p1, MpaKind::Symmetric, KdCase::Integer).unwrap();
        let a = threshold_k(&p1, MpaKind::Asymmetric, KdCase::Integer).unwrap();
        assert_relative_eq!(s, kappa / 4.0 + gr / 4.0, max_relative = 1e-14);
        assert_relative_eq!(a, s, max_relative = 1e-14);
    }

    #[test]
    fn threshold_rejects_unequal_damping() {
        let p = SystemParams::new(
            MagnonMode::new(1e10, 1.0),
            MagnonMode::new(1e10, 2.0),
            WaveguideCoupling::new(1.0, 1.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(threshold_k(&p, MpaKind::Symmetric, KdCase::Integer), Err(Error::UnequalDamping { .. })));
    }

    #[test]
    fn thresholds_match_eigenvalue_crossing() {
        for d in [0.0, 0.5, 1.0] {
            for kind in [MpaKind::Symmetric, MpaKind::Asymmetric] {
                for case in [KdCase::Integer, KdCase::HalfInteger] {
                    let p = params(d, case.kd(), 0.0, kind);
                    let analytic = threshold_k(&p, kind, case).unwrap();
                    let numeric = numeric_threshold(&p, kind, 1e-12).unwrap();
                    assert_relative_eq!(analytic, numeric, max_relative = 1e-4);
                }
            }
        }
    }

    #[test]
    fn ensemble_without_measurement_is_conditional() {
        let p = params(0.5, 0.3, mhz(0.2), MpaKind::Symmetric);
        let mats = SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap();
        let e = ensemble_covariance(&mats, &FeedbackGains::zero()).unwrap();
        assert_eq!(e.mean_cov.amax(), 0.0);
        assert_eq!(e.ensemble, e.conditional);
    }

    #[test]
    fn strong_feedback_suppresses_mean_fluctuations() {
        let p = params(1.0, 0.0, mhz(1.0), MpaKind::Symmetric);
        let m = MeasurementConfig::new(1.0, 1.0, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
        let mats = SystemMatrices::new(&p, &m).unwrap();
        let g = 1e3 * mats.max_linewidth();
        let e = ensemble_covariance(&mats, &FeedbackGains::right_port(g, g)).unwrap();
        assert!(e.mean_cov.norm() < 1e-2 * e.conditional.norm());
        let weak = ensemble_covariance(&mats, &FeedbackGains::right_port(0.1 * g / 1e3, 0.1 * g / 1e3)).unwrap();
        assert!(weak.mean_cov.norm() > e.mean_cov.norm());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lyapunov_residual_is_small(
            d in 0.0..1.0f64, kd in 0.0..6.3f64, frac in 0.0..0.95f64, sym in proptest::bool::ANY,
            n1 in 0.0..1.0f64, n2 in 0.0..1.0f64,
        ) {
            let kind = if sym { MpaKind::Symmetric } else { MpaKind::Asymmetric };
            let mut p = params(d, kd, 0.0, kind);
            p.mode_1.n_bar = n1;
            p.mode_2.n_bar = n2;
            let k = frac * numeric_threshold(&p, kind, 1e-10).unwrap();
            let p = kind.apply(&p, k);
            let mats = SystemMatrices::new(&p, &MeasurementConfig::none()).unwrap();
            let s = solve_lyapunov(&mats.drift, &mats.diffusion).unwrap();
            prop_assert!(lyapunov_residual(&mats.drift, &mats.diffusion, &s) < 1e-10);
            prop_assert!(s.is_physical());
            let rep = check_stability(&mats);
            prop_assert!(rep.unconditional_stable && rep.conditional_stable);
        }

        #[test]
        fn conditional_states_are_physical(
            d in 0.0..1.0f64, kd in 0.0..6.3f64, frac in 0.0..0.9f64,
            el in 0.0..1.0f64, er in 0.0..1.0f64, tl in 0.0..6.3f64, tr in 0.0..6.3f64,
        ) {
            let p0 = params(d, kd, 0.0, MpaKind::Symmetric);
            let k = frac * numeric_threshold(&p0, MpaKind::Symmetric, 1e-10).unwrap();
            let p = MpaKind::Symmetric.apply(&p0, k);
            let mats = SystemMatrices::new(&p, &MeasurementConfig::new(el, er, tl, tr).unwrap()).unwrap();
            let s = steady_conditional(&mats).unwrap();
            prop_assert_eq!(s.matrix(), &s.matrix().transpose());
            prop_assert!(s.min_physical_eigenvalue() >= -1e-9);
            prop_assert!(riccati_residual(&mats, &s) < 1e-10);
        }

        #[test]
        fn detection_never_lowers_purity(
            d in 0.0..1.0f64, kd in 0.0..6.3f64, frac in 0.0..0.9f64, sym in any::<bool>(),
            el in 0.0..1.0f64, er in 0.0..1.0f64, tl in 0.0..6.3f64, tr in 0.0..6.3f64,
        ) {
            let kind = if sym { MpaKind::Symmetric } else { MpaKind::Asymmetric };
            let base = params(d, kd, 0.0, kind);
            let p = kind.apply(&base, frac * numeric_threshold(&base, kind, 1e-6).unwrap());
            let sigma = solve_lyapunov(&build_drift(&p), &build_diffusion(&p)).unwrap();
            let mats = SystemMatrices::new(&p, &MeasurementConfig::new(el, er, tl, tr).unwrap()).unwrap();
            let sc = steady_conditional(&mats).unwrap();
            let (pu, pc) = (crate::measures::purity(&sigma).unwrap(), crate::measures::purity(&sc).unwrap());
            prop_assert!(pc >= pu - 1e-9 && pc <= 1.0 + 1e-9, "{} vs {}", pc, pu);
            // conditioning only removes noise: σ_c ⪯ σ
            let gap = (sigma.matrix() - sc.matrix()).symmetric_eigenvalues().min();
            prop_assert!(gap >= -1e-9 * sigma.matrix().norm());
        }

        #[test]
        fn one_port_flattened_equals_per_channel(d in 0.0..1.0f64, kd in 0.0..6.3f64, er in 0.01..1.0f64, tr in 0.0..6.3f64) {
            let p = params(d, kd, mhz(0.2), MpaKind::Symmetric);
            let meas = MeasurementConfig::new(0.0, er, 0.0, tr).unwrap();
            let solve = |mode| {
                let m = SystemMatrices::with_options(&p, &meas, BackactionScaling::Sme, mode).unwrap();
                steady_conditional(&m).unwrap().into_matrix()
            };
            prop_assert!((solve(ChannelMode::PerChannel) - solve(ChannelMode::Flattened)).amax() < 1e-12);
        }

        #[test]
        fn threshold_monotonicity(d1 in 0.0..1.0f64, d2 in 0.0..1.0f64) {
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            let s_lo = threshold_k(&params(lo, 0.0, 0.0, MpaKind::Symmetric), MpaKind::Symmetric, KdCase::Integer).unwrap();
            let s_hi = threshold_k(&params(hi, 0.0, 0.0, MpaKind::Symmetric), MpaKind::Symmetric, KdCase::Integer).unwrap();
            prop_assert!(s_hi >= s_lo * (1.0 - 1e-14));
            let a_lo = threshold_k(&params(lo, 0.0, 0.0, MpaKind::Asymmetric), MpaKind::Asymmetric, KdCase::HalfInteger).unwrap();
            let a_hi = threshold_k(&params(hi, 0.0, 0.0, MpaKind::Asymmetric), MpaKind::Asymmetric, KdCase::HalfInteger).unwrap();
            prop_assert!(a_hi <= a_lo * (1.0 + 1e-14));
        }

        #[test]
        fn riccati_preserves_symmetry_and_physicality(
            d in 0.0..1.0f64, kd in 0.0..6.3f64, el in 0.0..1.0f64, er in 0.0..1.0f64,
        ) {
            let p = params(d, kd, mhz(0.1), MpaKind::Asymmetric);
            let mats = SystemMatrices::new(&p, &MeasurementConfig::new(el, er, 0.3, 1.1).unwrap()).unwrap();
            let traj = integrate_riccati(&mats, &CovarianceMatrix::vacuum(2), default_dt(&mats) * 20.0, 1.0 / mhz(1.0), 50).unwrap();
            for s in &traj.states {
                prop_assert_eq!(s.matrix(), &s.matrix().transpose());
                prop_assert!(s.min_physical_eigenvalue() >= -1e-9);
            }
        }
    }
}
