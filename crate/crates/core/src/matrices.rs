//! Drift, diffusion, measurement and feedback matrices of the moment
//! equations, for two spheres and for a general chiral chain.
//!
//! Quadratures are ordered (x₁, p₁, x₂, p₂, …) with vacuum variance 1/2.

use std::f64::consts::SQRT_2;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MagnonMode, SystemParams};

/// Homodyne efficiencies and local-oscillator phases of the two output ports.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub eta_l: f64,
    pub eta_r: f64,
    pub theta_l: f64,
    pub theta_r: f64,
}

impl MeasurementConfig {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(eta_l: f64, eta_r: f64, theta_l: f64, theta_r: f64) -> Result<Self> {
        let m = Self {
            eta_l,
            eta_r,
            theta_l,
            theta_r,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta_l) {
            return Err(Error::invalid("eta_L", format!("{} outside [0, 1]", self.eta_l)));
        }
        if !(0.0..=1.0).contains(&self.eta_r) {
            return Err(Error::invalid("eta_R", format!("{} outside [0, 1]", self.eta_r)));
        }
        if !self.theta_l.is_finite() || !self.theta_r.is_finite() {
            return Err(Error::invalid("theta", "must be finite"));
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.eta_l > 0.0 || self.eta_r > 0.0
    }
}

/// How strongly the homodyne record conditions the state.
///
/// With measurement vector C of a port, the conditional covariance obeys
/// dσ/dt = Aσ + σAᵀ + D − Σ (σb − f)(σb − f)ᵀ and the current mean is r·μ̄.
///
/// | variant    | b    | f    | r    |
/// |------------|------|------|------|
/// | `Sme`      | C    | C/2  | C    |
/// | `FullRate` | √2 C | C/√2 | √2 C |
/// | `Printed`  | C    | C/√2 | √2 C |
///
/// `Sme` and `FullRate` are proper Gaussian filters (b = 2f = r). `Printed`
/// is kept for literal comparison and can produce unphysical states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackactionScaling {
    #[default]
    Sme,
    FullRate,
    Printed,
}

impl BackactionScaling {
    fn factors(self) -> (f64, f64, f64) {
        match self {
            BackactionScaling::Sme => (1.0, 0.5, 1.0),
            BackactionScaling::FullRate => (SQRT_2, 1.0 / SQRT_2, SQRT_2),
            BackactionScaling::Printed => (1.0, 1.0 / SQRT_2, SQRT_2),
        }
    }
}

/// Whether the two output ports are filtered as independent channels or
/// collapsed onto one vector C_L + C_R driven by a single noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    PerChannel,
    Flattened,
}

/// Effective measurement channel entering the filter equations.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// Multiplies σ in the innovation gain σb − f.
    pub b: DVector<f64>,
    pub f: DVector<f64>,
    /// Current mean is r·μ̄.
    pub r: DVector<f64>,
}

impl Channel {
    /// Innovation gain σb − f.
    pub fn gain(&self, sigma: &DMatrix<f64>) -> DVector<f64> {
        sigma * &self.b - &self.f
    }
}

/// Measurement vectors C_λ and F_λ = C_λ/√2 of the two ports.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementVectors {
    pub c_l: DVector<f64>,
    pub c_r: DVector<f64>,
    pub f_l: DVector<f64>,
    pub f_r: DVector<f64>,
}

/// All matrices of the two-mode moment equations.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub drift: DMatrix<f64>,
    pub diffusion: DMatrix<f64>,
    /// [C_L, C_R].
    pub meas_c: [DVector<f64>; 2],
    /// [F_L, F_R], always C_λ/√2.
    pub meas_f: [DVector<f64>; 2],
    pub scaling: BackactionScaling,
    pub channel_mode: ChannelMode,
}

impl SystemMatrices {
    pub fn new(params: &SystemParams, meas: &MeasurementConfig) -> Result<Self> {
        Self::with_options(params, meas, BackactionScaling::default(), ChannelMode::default())
    }

    pub fn with_options(
        params: &SystemParams,
        meas: &MeasurementConfig,
        scaling: BackactionScaling,
        channel_mode: ChannelMode,
    ) -> Result<Self> {
        params.validate()?;
        meas.validate()?;
        let v = build_measurement(params, meas);
        Ok(Self {
            drift: build_drift(params),
            diffusion: build_diffusion(params),
            meas_c: [v.c_l, v.c_r],
            meas_f: [v.f_l, v.f_r],
            scaling,
            channel_mode,
        })
    }

    /// Matrices for an arbitrary drift/diffusion pair without measurement.
    pub fn unmeasured(drift: DMatrix<f64>, diffusion: DMatrix<f64>) -> Self {
        let n = drift.nrows();
        Self {
            drift,
            diffusion,
            meas_c: [DVector::zeros(n), DVector::zeros(n)],
            meas_f: [DVector::zeros(n), DVector::zeros(n)],
            scaling: BackactionScaling::default(),
            channel_mode: ChannelMode::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn is_measured(&self) -> bool {
        self.meas_c.iter().any(|c| c.amax() > 0.0)
    }

    /// Filter channels for the configured scaling and channel mode.
    pub fn channels(&self) -> Vec<Channel> {
        let (kb, kf, kr) = self.scaling.factors();
        let make = |c: &DVector<f64>| Channel {
            b: c * kb,
            f: c * kf,
            r: c * kr,
        };
        match self.channel_mode {
            ChannelMode::PerChannel => self.meas_c.iter().map(make).collect(),
            ChannelMode::Flattened => vec![make(&(&self.meas_c[0] + &self.meas_c[1]))],
        }
    }

    /// Ã = A + Σ f bᵀ, the drift of the conditional covariance flow.
    pub fn conditional_drift(&self) -> DMatrix<f64> {
        let mut a = self.drift.clone();
        for ch in self.channels() {
            a += &ch.f * ch.b.transpose();
        }
        a
    }

    /// Largest effective linewidth −A_jj; used to set default step sizes.
    pub fn max_linewidth(&self) -> f64 {
        (0..self.dim()).map(|i| -self.drift[(i, i)]).fold(0.0, f64::max)
    }

    pub fn min_linewidth(&self) -> f64 {
        (0..self.dim())
            .map(|i| -self.drift[(i, i)])
            .filter(|v| *v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn with_feedback(&self, gains: &FeedbackGains) -> Self {
        let mut out = self.clone();
        out.drift = apply_feedback(&self.drift, gains);
        out
    }
}

fn local_block(mode: &MagnonMode, linewidth: f64) -> [[f64; 2]; 2] {
    [
        [-linewidth, mode.delta - 2.0 * mode.k_tilde],
        [-mode.delta - 2.0 * mode.k_tilde, -linewidth],
    ]
}

/// Quadrature block of the complex coupling a = α + iβ acting on m.
fn complex_block(a: Complex<f64>) -> [[f64; 2]; 2] {
    [[a.re, -a.im], [a.im, a.re]]
}

fn set_block(m: &mut DMatrix<f64>, i: usize, j: usize, b: [[f64; 2]; 2]) {
    for r in 0..2 {
        for c in 0..2 {
            m[(2 * i + r, 2 * j + c)] = b[r][c];
        }
    }
}

/// Drift A = [[A₁, A_L], [A_R, A₂]].
pub fn build_drift(params: &SystemParams) -> DMatrix<f64> {
    let c = &params.coupling;
    let lw = params.effective_linewidths();
    let mut a = DMatrix::zeros(4, 4);
    set_block(&mut a, 0, 0, local_block(&params.mode_1, lw[0]));
    set_block(&mut a, 1, 1, local_block(&params.mode_2, lw[1]));
    let phase = Complex::from_polar(1.0, c.kd);
    set_block(&mut a, 0, 1, complex_block(-c.gamma_l * phase));
    set_block(&mut a, 1, 0, complex_block(-c.gamma_r * phase));
    a
}

/// Diffusion matrix for a vacuum waveguide input.
///
/// The off-diagonal block is [[D₊, D₋], [−D₋, D₊]] with
/// D₊ = (Γ_L + Γ_R) cos kd / 2 and D₋ = (Γ_R − Γ_L) sin kd / 2. This sign of
/// D₋ is the one for which the vacuum is the stationary state of the
/// undriven chiral master equation.
pub fn build_diffusion(params: &SystemParams) -> DMatrix<f64> {
    let c = &params.coupling;
    let g = c.total();
    let mut d = DMatrix::zeros(4, 4);
    for (j, mode) in params.modes().into_iter().enumerate() {
        let v = mode.kappa * (mode.n_bar + 0.5) + g / 2.0;
        d[(2 * j, 2 * j)] = v;
        d[(2 * j + 1, 2 * j + 1)] = v;
    }
    let plus = g * c.kd.cos() / 2.0;
    let minus = (c.gamma_r - c.gamma_l) * c.kd.sin() / 2.0;
    set_block(&mut d, 0, 1, [[plus, minus], [-minus, plus]]);
    set_block(&mut d, 1, 0, [[plus, -minus], [minus, plus]]);
    d
}

/// Measurement vectors of the left and right ports.
pub fn build_measurement(params: &SystemParams, meas: &MeasurementConfig) -> MeasurementVectors {
    let kd = params.coupling.kd;
    let al = (meas.eta_l * params.coupling.gamma_l).sqrt();
    let ar = (meas.eta_r * params.coupling.gamma_r).sqrt();
    let (tl, tr) = (meas.theta_l, meas.theta_r);
    let c_l = if al > 0.0 {
        DVector::from_vec(vec![tl.cos(), -tl.sin(), (kd + tl).cos(), -(kd + tl).sin()]) * al
    } else {
        DVector::zeros(4)
    };
    let c_r = if ar > 0.0 {
        DVector::from_vec(vec![tr.cos(), -tr.sin(), (kd - tr).cos(), (kd - tr).sin()]) * ar
    } else {
        DVector::zeros(4)
    };
    MeasurementVectors {
        f_l: &c_l / SQRT_2,
        f_r: &c_r / SQRT_2,
        c_l,
        c_r,
    }
}

/// Gains of the state-based feedback, indexed `[λ][j]` with λ = 0 for the
/// left port and 1 for the right port.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeedbackGains {
    pub g_x: [[f64; 2]; 2],
    pub g_p: [[f64; 2]; 2],
}

impl FeedbackGains {
    pub fn zero() -> Self {
        Self::default()
    }

    /// From `[L1x, L1p, L2x, L2p, R1x, R1p, R2x, R2p]`.
    pub fn from_array(v: [f64; 8]) -> Self {
        Self {
            g_x: [[v[0], v[2]], [v[4], v[6]]],
            g_p: [[v[1], v[3]], [v[5], v[7]]],
        }
    }

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.g_x[0][0],
            self.g_p[0][0],
            self.g_x[0][1],
            self.g_p[0][1],
            self.g_x[1][0],
            self.g_p[1][0],
            self.g_x[1][1],
            self.g_p[1][1],
        ]
    }

    /// Same gain on both quadratures of both modes through the right port.
    pub fn right_port(g1: f64, g2: f64) -> Self {
        Self::from_array([0.0, 0.0, 0.0, 0.0, g1, g1, g2, g2])
    }

    pub fn is_zero(&self) -> bool {
        self.to_array().iter().all(|g| *g == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.to_array().iter().any(|g| !g.is_finite()) {
            return Err(Error::invalid("gains", "must be finite"));
        }
        Ok(())
    }

    /// Negative gains act as anti-damping.
    pub fn has_anti_damping(&self) -> bool {
        self.to_array().iter().any(|g| *g < 0.0)
    }

    /// (ΣG^x₁, ΣG^p₁, ΣG^x₂, ΣG^p₂) summed over both ports.
    pub fn diagonal(&self) -> [f64; 4] {
        [
            self.g_x[0][0] + self.g_x[1][0],
            self.g_p[0][0] + self.g_p[1][0],
            self.g_x[0][1] + self.g_x[1][1],
            self.g_p[0][1] + self.g_p[1][1],
        ]
    }
}

/// Ā = A − diag(ΣG^x₁, ΣG^p₁, ΣG^x₂, ΣG^p₂).
pub fn apply_feedback(a: &DMatrix<f64>, gains: &FeedbackGains) -> DMatrix<f64> {
    let mut out = a.clone();
    for (i, g) in gains.diagonal().iter().enumerate() {
        out[(i, i)] -= g;
    }
    out
}

/// A chain of spheres along one waveguide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub modes: Vec<MagnonMode>,
    /// Positions along the guide (m), strictly increasing.
    pub positions: Vec<f64>,
    pub gamma_l: f64,
    pub gamma_r: f64,
    /// Guided wavenumber (1/m).
    pub k: f64,
}

impl ChainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::invalid("modes", "chain needs at least one mode"));
        }
        if self.modes.len() != self.positions.len() {
            return Err(Error::invalid("positions", "one position per mode"));
        }
        for (i, w) in self.positions.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::ChainOrdering { index: i + 1 });
            }
        }
        for m in &self.modes {
            m.validate()?;
        }
        if !(self.gamma_l >= 0.0 && self.gamma_r >= 0.0) {
            return Err(Error::invalid("gamma", "emission rates must be non-negative"));
        }
        if self.gamma_l + self.gamma_r <= 0.0 {
            return Err(Error::NoWaveguideCoupling);
        }
        Ok(())
    }
}

/// Step function with θ(0) = 1/2.
fn theta(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        0.0
    } else {
        0.5
    }
}

/// Drift and diffusion of an N-sphere chiral chain.
///
/// Right-movers (wavenumber +k) carry excitations from lower to higher
/// positions and left-movers (−k) the other way.
pub fn build_chain(spec: &ChainSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let n = spec.modes.len();
    let ports = [(spec.gamma_r, spec.k, 1.0), (spec.gamma_l, -spec.k, -1.0)];
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for l in 0..n {
            let dz = spec.positions[i] - spec.positions[l];
            let mut coupling = Complex::new(0.0, 0.0);
            let mut jump = Complex::new(0.0, 0.0);
            for &(rate, k, dir) in &ports {
                coupling -= rate * theta(dir * dz) * Complex::from_polar(1.0, k * dz);
                jump += rate * Complex::from_polar(1.0, -k * dz);
            }
            if i == l {
                let mode = &spec.modes[i];
                let lw = mode.kappa / 2.0 - coupling.re;
                set_block(&mut a, i, i, local_block(mode, lw));
                let v = mode.kappa * (mode.n_bar + 0.5) + jump.re / 2.0;
                set_block(&mut d, i, i, [[v, 0.0], [0.0, v]]);
            } else {
                set_block(&mut a, i, l, complex_block(coupling));
                set_block(&mut d, i, l, [[jump.re / 2.0, jump.im / 2.0], [-jump.im / 2.0, jump.re / 2.0]]);
            }
        }
    }
    Ok((a, d))
}
