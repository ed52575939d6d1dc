use nalgebra::Complex;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no waveguide coupling (gamma_L + gamma_R = 0)")]
    NoWaveguideCoupling,

    #[error("evanescent TE10 mode: omega = {omega:.6e} rad/s is below the cutoff {cutoff:.6e} rad/s")]
    EvanescentMode { omega: f64, cutoff: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("steady-state amplitudes did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    AmplitudeNonConvergence {
        iterations: usize,
        residual: f64,
        last: [Complex<f64>; 2],
    },

    #[error("infeasible calibration target: {0}")]
    InfeasibleTarget(String),

    #[error("drift matrix is not Hurwitz (max Re eigenvalue {max_re:.6e})")]
    UnstableDrift {
        max_re: f64,
        spectrum: Vec<Complex<f64>>,
    },

    #[error("conditional dynamics unstable (|sigma|_F = {norm:.3e} at t = {t:.6e})")]
    ConditionalDivergence { t: f64, norm: f64 },

    #[error("conditional covariance did not reach a fixed point by t = {t:.6e} (relative rate {rate:.3e})")]
    NoFixedPoint { t: f64, rate: f64 },

    #[error("analytic threshold requires equal damping (kappa_1 = {kappa_1:.6e}, kappa_2 = {kappa_2:.6e})")]
    UnequalDamping { kappa_1: f64, kappa_2: f64 },

    #[error("unphysical covariance matrix (min eig(sigma + i Omega/2) = {min_eigenvalue:.3e})")]
    Unphysical { min_eigenvalue: f64 },

    #[error("covariance determinant is not positive ({0:.3e})")]
    NonPositiveDeterminant(f64),

    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },

    #[error("fidelity radicand is negative ({0:.3e})")]
    NegativeRadicand(f64),

    #[error("chain positions must be strictly increasing (index {index})")]
    ChainOrdering { index: usize },

    #[error("not enough samples for ensemble statistics: {0}")]
    InsufficientSamples(String),

    #[error("scenario error at `{key}`: {reason}")]
    Scenario { key: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn scenario(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Scenario {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
