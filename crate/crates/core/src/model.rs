//! Physical parameters of the two-sphere system, derived rates, and the
//! calibration routines that connect drive fields to the linearised
//! parametric-amplifier strengths.
//!
//! Every rate and frequency is an angular frequency in rad/s. Helpers
//! [`mhz`] and [`ghz`] convert from values quoted as ω/2π.

use std::f64::consts::{PI, TAU};

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Vacuum permeability (H/m).
pub const MU_0: f64 = 1.256_637_062_12e-6;

/// ω for a frequency quoted in MHz of ω/2π.
pub fn mhz(value: f64) -> f64 {
    value * TAU * 1e6
}

/// ω for a frequency quoted in GHz of ω/2π.
pub fn ghz(value: f64) -> f64 {
    value * TAU * 1e9
}

/// Inverse of [`mhz`].
pub fn to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

/// Kittel mode of one sphere together with its linearised amplifier terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnonMode {
    pub omega_m: f64,
    /// Intrinsic (non-radiative) damping rate κ.
    pub kappa: f64,
    pub n_bar: f64,
    /// Effective detuning Δ of the linearised Hamiltonian.
    pub delta: f64,
    /// Parametric-amplifier strength K̃ (taken non-negative; any phase is a
    /// quadrature rotation).
    pub k_tilde: f64,
    /// Bare Kerr coefficient K.
    pub k_kerr: f64,
}

impl MagnonMode {
    pub fn new(omega_m: f64, kappa: f64) -> Self {
        Self {
            omega_m,
            kappa,
            n_bar: 0.0,
            delta: 0.0,
            k_tilde: 0.0,
            k_kerr: 0.0,
        }
    }

    pub fn with_n_bar(mut self, n_bar: f64) -> Self {
        self.n_bar = n_bar;
        self
    }

    pub fn with_detuning(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_mpa(mut self, k_tilde: f64) -> Self {
        self.k_tilde = k_tilde;
        self
    }

    pub fn with_kerr(mut self, k_kerr: f64) -> Self {
        self.k_kerr = k_kerr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return Err(Error::invalid("omega_m", "must be positive and finite"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid("kappa", "must be positive and finite"));
        }
        if !(self.n_bar >= 0.0 && self.n_bar.is_finite()) {
            return Err(Error::invalid("n_bar", "must be non-negative"));
        }
        if !(self.k_tilde >= 0.0 && self.k_tilde.is_finite()) {
            return Err(Error::invalid("k_tilde", "must be non-negative"));
        }
        if !self.delta.is_finite() || !self.k_kerr.is_finite() {
            return Err(Error::invalid("delta", "detuning and Kerr must be finite"));
        }
        Ok(())
    }
}

/// Emission rates into the left/right guided modes and the propagation
/// phase accumulated between the two spheres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideCoupling {
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub kd: f64,
}

impl WaveguideCoupling {
    pub fn new(gamma_l: f64, gamma_r: f64, kd: f64) -> Result<Self> {
        let c = Self {
            gamma_l,
            gamma_r,
            kd,
        };
        c.validate()?;
        Ok(c)
    }

    /// Fixes Γ_R and sets Γ_L = Γ_R (1 − D)/(1 + D).
    pub fn from_chirality(gamma_r: f64, d: f64, kd: f64) -> Result<Self> {
        if !(d > -1.0 && d <= 1.0) {
            return Err(Error::invalid("D", format!("{d} outside (-1, 1]")));
        }
        Self::new(gamma_r * (1.0 - d) / (1.0 + d), gamma_r, kd)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_l >= 0.0 && self.gamma_r >= 0.0) {
            return Err(Error::invalid("gamma", "emission rates must be non-negative"));
        }
        if !self.kd.is_finite() || !self.gamma_l.is_finite() || !self.gamma_r.is_finite() {
            return Err(Error::invalid("kd", "must be finite"));
        }
        if self.gamma_l + self.gamma_r <= 0.0 {
            return Err(Error::NoWaveguideCoupling);
        }
        Ok(())
    }

    pub fn chirality(&self) -> Result<f64> {
        chirality(self)
    }

    pub fn total(&self) -> f64 {
        self.gamma_l + self.gamma_r
    }
}

/// D = (Γ_R − Γ_L)/(Γ_R + Γ_L).
pub fn chirality(coupling: &WaveguideCoupling) -> Result<f64> {
    let total = coupling.gamma_l + coupling.gamma_r;
    if total <= 0.0 {
        return Err(Error::NoWaveguideCoupling);
    }
    Ok((coupling.gamma_r - coupling.gamma_l) / total)
}

/// Propagation direction of a guided photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

/// Rectangular waveguide cross-section, sphere placement and YIG material
/// constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveguideGeometry {
    pub a: f64,
    pub b: f64,
    pub x_pos: f64,
    pub m_sat: f64,
    pub volume: f64,
    /// First-order anisotropy constant (J/m³, signed; YIG is negative).
    pub k_an: f64,
    /// Gyromagnetic ratio (rad/s per tesla).
    pub gamma_0: f64,
    pub epsilon_0: f64,
    pub mu_0: f64,
}

impl WaveguideGeometry {
    /// YIG sphere of diameter `diameter` at transverse position `x_pos`.
    pub fn yig_sphere(a: f64, b: f64, x_pos: f64, diameter: f64) -> Self {
        Self {
            a,
            b,
            x_pos,
            m_sat: 1.96e5,
            volume: PI * diameter.powi(3) / 6.0,
            k_an: -610.0,
            gamma_0: TAU * 28e9,
            epsilon_0: EPSILON_0,
            mu_0: MU_0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.a >= self.b) {
            return Err(Error::invalid("a, b", "need a >= b > 0"));
        }
        if !(0.0..=self.a).contains(&self.x_pos) {
            return Err(Error::invalid("x_pos", "must lie in [0, a]"));
        }
        if !(self.volume > 0.0) {
            return Err(Error::invalid("volume", "must be positive"));
        }
        if !(self.m_sat > 0.0) {
            return Err(Error::invalid("m_sat", "must be positive"));
        }
        Ok(())
    }

    pub fn speed_of_light(&self) -> f64 {
        1.0 / (self.epsilon_0 * self.mu_0).sqrt()
    }

    /// Angular cutoff frequency of the TE₁₀ mode.
    pub fn cutoff(&self) -> f64 {
        self.speed_of_light() * PI / self.a
    }

    /// Signed TE₁₀ wavenumber: positive for right-movers, negative for left-movers.
    pub fn wavenumber(&self, omega: f64, direction: Direction) -> Result<f64> {
        let c = self.speed_of_light();
        let k2 = (omega / c).powi(2) - (PI / self.a).powi(2);
        if !(k2 > 0.0) {
            return Err(Error::EvanescentMode {
                omega,
                cutoff: self.cutoff(),
            });
        }
        let k = k2.sqrt();
        Ok(match direction {
            Direction::Right => k,
            Direction::Left => -k,
        })
    }
}

/// Emission rate Γ_λ = g_λ² of the Kittel mode into the TE₁₀ mode travelling
/// in `direction`.
pub fn te10_coupling(geom: &WaveguideGeometry, omega: f64, direction: Direction) -> Result<f64> {
    geom.validate()?;
    let k = geom.wavenumber(omega, direction)?;
    let prefactor =
        (geom.gamma_0 * geom.m_sat * geom.volume / (2.0 * geom.epsilon_0 * omega * geom.a * geom.b))
            .sqrt();
    let phase = PI * geom.x_pos / geom.a;
    let g = prefactor * ((PI / geom.a) * phase.cos() - k * phase.sin());
    Ok(g * g)
}

/// Magnitude of the Kerr coefficient μ₀ K_an γ₀² / (M² V).
pub fn kerr_coefficient(geom: &WaveguideGeometry) -> Result<f64> {
    if !(geom.volume > 0.0) {
        return Err(Error::invalid("volume", "must be positive"));
    }
    if !(geom.m_sat > 0.0) {
        return Err(Error::invalid("m_sat", "must be positive"));
    }
    Ok((geom.mu_0 * geom.k_an * geom.gamma_0 * geom.gamma_0 / (geom.m_sat * geom.m_sat * geom.volume)).abs())
}

/// Bose–Einstein occupation of a mode at `omega_m` (rad/s) and `temperature` (K).
/// Zero temperature gives exactly zero.
pub fn thermal_occupation(omega_m: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega_m / (K_B * temperature);
    1.0 / x.exp_m1()
}

/// Coherent drives applied to the two spheres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub amp_1: f64,
    pub amp_2: f64,
    pub phase_1: f64,
    pub phase_2: f64,
    pub omega_d: f64,
}

impl DriveConfig {
    pub fn new(amp_1: f64, phase_1: f64, amp_2: f64, phase_2: f64, omega_d: f64) -> Result<Self> {
        if !(amp_1 >= 0.0 && amp_2 >= 0.0) {
            return Err(Error::invalid("amp", "drive amplitudes must be non-negative"));
        }
        Ok(Self {
            amp_1,
            amp_2,
            phase_1: phase_1.rem_euclid(TAU),
            phase_2: phase_2.rem_euclid(TAU),
            omega_d,
        })
    }

    fn complex(&self) -> [Complex<f64>; 2] {
        [
            Complex::from_polar(self.amp_1, self.phase_1),
            Complex::from_polar(self.amp_2, self.phase_2),
        ]
    }
}

/// Both magnon modes and their shared waveguide coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub mode_1: MagnonMode,
    pub mode_2: MagnonMode,
    pub coupling: WaveguideCoupling,
}

impl SystemParams {
    pub fn new(mode_1: MagnonMode, mode_2: MagnonMode, coupling: WaveguideCoupling) -> Result<Self> {
        let p = Self {
            mode_1,
            mode_2,
            coupling,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.mode_1.validate()?;
        self.mode_2.validate()?;
        self.coupling.validate()?;
        Ok(())
    }

    pub fn modes(&self) -> [&MagnonMode; 2] {
        [&self.mode_1, &self.mode_2]
    }

    /// Γ̃_j = (κ_j + Γ_L + Γ_R)/2.
    pub fn effective_linewidths(&self) -> [f64; 2] {
        let g = self.coupling.total();
        [(self.mode_1.kappa + g) / 2.0, (self.mode_2.kappa + g) / 2.0]
    }

    pub fn with_k_tilde(mut self, k_1: f64, k_2: f64) -> Self {
        self.mode_1.k_tilde = k_1;
        self.mode_2.k_tilde = k_2;
        self
    }
}

/// Result of the self-consistent mean-field solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyAmplitudes {
    pub amplitudes: [Complex<f64>; 2],
    /// Δ_j = δ_j + 4 K_j |⟨m_j⟩|².
    pub delta: [f64; 2],
    /// K̃_j = K_j |⟨m_j⟩|².
    pub k_tilde: [f64; 2],
    pub iterations: usize,
    /// Relative residual of the coupled amplitude relations.
    pub residual: f64,
}

const AMPLITUDE_RELAXATION: f64 = 0.5;
const AMPLITUDE_MAX_ITER: usize = 10_000;
const AMPLITUDE_TOL: f64 = 1e-12;

fn amplitude_map(params: &SystemParams, drives: &DriveConfig, m: [Complex<f64>; 2]) -> [Complex<f64>; 2] {
    let e = drives.complex();
    let lw = params.effective_linewidths();
    let modes = params.modes();
    let phase = Complex::from_polar(1.0, params.coupling.kd);
    let feed = [params.coupling.gamma_l * m[1] * phase, params.coupling.gamma_r * m[0] * phase];
    let mut out = [Complex::new(0.0, 0.0); 2];
    for j in 0..2 {
        let pop = m[j].norm_sqr();
        let bare = modes[j].omega_m - drives.omega_d;
        let delta = bare + 4.0 * modes[j].k_kerr * pop;
        let k_tilde = modes[j].k_kerr * pop;
        let denom = Complex::new(lw[j], delta - 2.0 * k_tilde);
        out[j] = (e[j] - feed[j]) / denom;
    }
    out
}

fn pair_norm(m: &[Complex<f64>; 2]) -> f64 {
    (m[0].norm_sqr() + m[1].norm_sqr()).sqrt()
}

/// Relative residual of the coupled steady-state amplitude relations.
pub fn amplitude_residual(params: &SystemParams, drives: &DriveConfig, m: [Complex<f64>; 2]) -> f64 {
    let image = amplitude_map(params, drives, m);
    let diff = [m[0] - image[0], m[1] - image[1]];
    let scale = pair_norm(&m);
    if scale == 0.0 {
        pair_norm(&diff)
    } else {
        pair_norm(&diff) / scale
    }
}

/// Steady-state coherent amplitudes with the Kerr shift updated
/// self-consistently.
///
/// Uses a damped fixed-point iteration (relaxation 0.5) started from zero
/// amplitude. The mean-field equations can be multistable; the branch
/// returned is the one reached from the undriven state.
pub fn steady_amplitudes(params: &SystemParams, drives: &DriveConfig) -> Result<SteadyAmplitudes> {
    params.validate()?;
    let mut m = [Complex::new(0.0, 0.0); 2];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < AMPLITUDE_MAX_ITER {
        iterations += 1;
        let image = amplitude_map(params, drives, m);
        let next = [
            m[0] + AMPLITUDE_RELAXATION * (image[0] - m[0]),
            m[1] + AMPLITUDE_RELAXATION * (image[1] - m[1]),
        ];
        let change = pair_norm(&[next[0] - m[0], next[1] - m[1]]);
        let scale = pair_norm(&next);
        m = next;
        if !scale.is_finite() {
            break;
        }
        if change <= AMPLITUDE_TOL * scale || scale == 0.0 {
            converged = true;
            break;
        }
    }
    let residual = amplitude_residual(params, drives, m);
    if !converged || !(residual < 1e-10) {
        return Err(Error::AmplitudeNonConvergence {
            iterations,
            residual,
            last: m,
        });
    }
    let modes = params.modes();
    let pops = [m[0].norm_sqr(), m[1].norm_sqr()];
    Ok(SteadyAmplitudes {
        amplitudes: m,
        delta: [
            modes[0].omega_m - drives.omega_d + 4.0 * modes[0].k_kerr * pops[0],
            modes[1].omega_m - drives.omega_d + 4.0 * modes[1].k_kerr * pops[1],
        ],
        k_tilde: [modes[0].k_kerr * pops[0], modes[1].k_kerr * pops[1]],
        iterations,
        residual,
    })
}

/// Which pair of amplifier strengths a calibration aims for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MpaTarget {
    /// K̃₁ = K̃₂ = K̃.
    Symmetric(f64),
    /// K̃₁ = K̃, K̃₂ = 0.
    Asymmetric(f64),
}

impl MpaTarget {
    pub fn strengths(&self) -> [f64; 2] {
        match *self {
            MpaTarget::Symmetric(k) => [k, k],
            MpaTarget::Asymmetric(k) => [k, 0.0],
        }
    }
}

/// Drives that realise a target amplifier pattern.
///
/// The amplitude relations are linear in the drives once the steady
/// amplitudes are fixed, so the target |⟨m_j⟩|² = K̃_j/K_j is inverted
/// exactly (amplitudes chosen real, so the closed-form strengths come out
/// real) and the effective detunings Δ_j of `params` are honoured by
/// choosing the drive frequency. The result is checked by re-solving the
/// steady state from zero amplitude.
pub fn calibrate_mpa(params: &SystemParams, target: MpaTarget) -> Result<DriveConfig> {
    params.validate()?;
    let k_target = target.strengths();
    if k_target.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
        return Err(Error::InfeasibleTarget("target strength must be non-negative".into()));
    }
    let modes = params.modes();
    let mut m = [Complex::new(0.0, 0.0); 2];
    for j in 0..2 {
        if k_target[j] > 0.0 {
            if !(modes[j].k_kerr > 0.0) {
                return Err(Error::InfeasibleTarget(format!(
                    "mode {} has no Kerr nonlinearity",
                    j + 1
                )));
            }
            m[j] = Complex::new((k_target[j] / modes[j].k_kerr).sqrt(), 0.0);
        }
    }
    if k_target.iter().all(|k| *k == 0.0) {
        return DriveConfig::new(0.0, 0.0, 0.0, 0.0, modes[0].omega_m - modes[0].delta);
    }

    // bare detunings needed for the requested effective ones
    let bare = [modes[0].delta - 4.0 * k_target[0], modes[1].delta - 4.0 * k_target[1]];
    let omega_d = modes[0].omega_m - bare[0];
    let lw = params.effective_linewidths();
    let mismatch = (modes[1].omega_m - omega_d - bare[1]).abs();
    if mismatch > (1e-9 * modes[1].omega_m).max(1e-6 * lw[1]) {
        return Err(Error::InfeasibleTarget(format!(
            "a single drive frequency cannot give both effective detunings; omega_m2 must be {:.9e} rad/s",
            omega_d + bare[1]
        )));
    }

    let phase = Complex::from_polar(1.0, params.coupling.kd);
    let e1 = m[0] * Complex::new(lw[0], modes[0].delta - 2.0 * k_target[0])
        + params.coupling.gamma_l * m[1] * phase;
    let e2 = m[1] * Complex::new(lw[1], modes[1].delta - 2.0 * k_target[1])
        + params.coupling.gamma_r * m[0] * phase;
    let drives = DriveConfig::new(e1.norm(), e1.arg(), e2.norm(), e2.arg(), omega_d)?;

    let check = steady_amplitudes(params, &drives)?;
    let reference = k_target[0].max(k_target[1]);
    for (j, (got, want)) in check.k_tilde.iter().zip(k_target).enumerate() {
        if (got - want).abs() > 1e-6 * reference {
            return Err(Error::InfeasibleTarget(format!(
                "steady state reached from zero amplitude has K_tilde_{} = {got:.6e} instead of {want:.6e} (other branch)",
                j + 1
            )));
        }
    }
    Ok(drives)
}

/// Closed-form amplifier strength for equal linewidths and zero detuning.
///
/// `Symmetric` evaluates the K̃₁ = K̃₂ expression and `Asymmetric` the
/// K̃₂ = 0 expression for K̃₁. The value is complex; its phase is the
/// quadrature rotation absorbed when K̃ is taken real. Returns `None` when
/// the expression is singular.
pub fn closed_form_mpa(params: &SystemParams, drives: &DriveConfig, symmetric: bool) -> Option<Complex<f64>> {
    let e = drives.complex();
    let c = &params.coupling;
    let i = Complex::<f64>::i();
    if symmetric {
        let k1 = params.mode_1.k_kerr;
        let k2 = params.mode_2.k_kerr;
        let num = k1 * k2.sqrt() * e[0] - k2 * k1.sqrt() * e[1];
        let den = (k1 * c.gamma_l - k2 * c.gamma_r).powi(2) * Complex::from_polar(1.0, 2.0 * c.kd);
        if den.norm() == 0.0 {
            return None;
        }
        Some(num * num / den)
    } else {
        if e[1].norm() == 0.0 {
            return None;
        }
        let lw = params.effective_linewidths()[0];
        let num = i * (c.gamma_r * e[0] * Complex::from_polar(1.0, c.kd) - lw * e[1]);
        Some(num / (2.0 * e[1]))
    }
}
