//! JSON scenario files, their validation into SI parameters, and the
//! built-in figure presets.
//!
//! Frequencies in the file are ω/2π in MHz or GHz; everything downstream is
//! in rad/s. Angles and sweep bounds accept either a number or a string of
//! the form `"<c>pi"` (`"pi"`, `"0.5pi"`, `"-2pi"`).

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{MpaKind, SteadyOptions};
use crate::error::{Error, Result};
use crate::matrices::{BackactionScaling, ChannelMode, FeedbackGains, MeasurementConfig};
use crate::model::{ghz, mhz, thermal_occupation, MagnonMode, SystemParams, WaveguideCoupling};

/// A real number, optionally written as a multiple of π.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Value(f64),
    Text(String),
}

impl Angle {
    pub fn resolve(&self, key: &str) -> Result<f64> {
        let v = match self {
            Angle::Value(v) => *v,
            Angle::Text(s) => parse_pi(s).ok_or_else(|| Error::scenario(key, format!("cannot read `{s}` as a number or multiple of pi")))?,
        };
        if !v.is_finite() {
            return Err(Error::scenario(key, "must be finite"));
        }
        Ok(v)
    }
}

impl Default for Angle {
    fn default() -> Self {
        Angle::Value(0.0)
    }
}

impl From<f64> for Angle {
    fn from(v: f64) -> Self {
        Angle::Value(v)
    }
}

impl From<&str> for Angle {
    fn from(s: &str) -> Self {
        Angle::Text(s.to_string())
    }
}

fn parse_pi(s: &str) -> Option<f64> {
    let t = s.trim();
    let coeff = t.strip_suffix("pi").or_else(|| t.strip_suffix('π'));
    match coeff {
        Some(c) => {
            let c = c.trim().trim_end_matches('*').trim();
            let k = match c {
                "" | "+" => 1.0,
                "-" => -1.0,
                _ => c.parse::<f64>().ok()?,
            };
            Some(k * PI)
        }
        None => t.parse::<f64>().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    #[serde(rename = "omega_m_GHz")]
    pub omega_m_ghz: f64,
    #[serde(rename = "kappa_MHz")]
    pub kappa_mhz: f64,
    #[serde(rename = "T_mK", default, skip_serializing_if = "Option::is_none")]
    pub t_mk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_bar: Option<f64>,
    #[serde(rename = "K_tilde_MHz", default)]
    pub k_tilde_mhz: f64,
    #[serde(rename = "Delta_MHz", default)]
    pub delta_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    #[serde(rename = "gamma_R_MHz")]
    pub gamma_r_mhz: f64,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(rename = "gamma_L_MHz", default, skip_serializing_if = "Option::is_none")]
    pub gamma_l_mhz: Option<f64>,
    #[serde(default)]
    pub kd: Angle,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSection {
    #[serde(rename = "eta_L", default)]
    pub eta_l: f64,
    #[serde(rename = "eta_R", default)]
    pub eta_r: f64,
    #[serde(rename = "theta_L", default)]
    pub theta_l: Angle,
    #[serde(rename = "theta_R", default)]
    pub theta_r: Angle,
}

/// Gains ω/2π in MHz, ordered L1x, L1p, L2x, L2p, R1x, R1p, R2x, R2p.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSection {
    #[serde(rename = "gains_MHz", default)]
    pub gains_mhz: [f64; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "kd")]
    Kd,
    #[serde(rename = "K_tilde")]
    KTilde,
    #[serde(rename = "D")]
    D,
    #[serde(rename = "gain_R1")]
    GainR1,
    #[serde(rename = "gain_ratio")]
    GainRatio,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Kd => "kd",
            Axis::KTilde => "K_tilde",
            Axis::D => "D",
            Axis::GainR1 => "gain_R1",
            Axis::GainRatio => "gain_ratio",
        }
    }

    /// Factor from file units to SI.
    fn scale(self) -> f64 {
        match self {
            Axis::KTilde | Axis::GainR1 => mhz(1.0),
            Axis::Kd | Axis::D | Axis::GainRatio => 1.0,
        }
    }

    pub fn is_gain(self) -> bool {
        matches!(self, Axis::GainR1 | Axis::GainRatio)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Overrides applied on top of the base scenario for one curve of a sweep.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesConfig {
    pub label: String,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kd: Option<Angle>,
    #[serde(rename = "K_tilde_MHz", default, skip_serializing_if = "Option::is_none")]
    pub k_tilde_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpa: Option<MpaKind>,
    #[serde(rename = "eta_L", default, skip_serializing_if = "Option::is_none")]
    pub eta_l: Option<f64>,
    #[serde(rename = "eta_R", default, skip_serializing_if = "Option::is_none")]
    pub eta_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(rename = "gain_R1_MHz", default, skip_serializing_if = "Option::is_none")]
    pub gain_r1_mhz: Option<f64>,
}

fn default_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub lo: Angle,
    pub hi: Angle,
    pub points: usize,
    /// MPA pattern used when K̃ is set by the axis or a series.
    #[serde(default = "default_mpa")]
    pub mpa: MpaKind,
    /// G_R2/G_R1 on the `gain_R1` axis.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Fixed G_R1 on the `gain_ratio` axis; defaults to the configured R1x gain.
    #[serde(rename = "gain_R1_MHz", default, skip_serializing_if = "Option::is_none")]
    pub gain_r1_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesConfig>,
}

fn default_mpa() -> MpaKind {
    MpaKind::Symmetric
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub seed: u64,
    /// Step in units of 10⁻³/Γ̃_max.
    pub dt_scale: f64,
    /// Run length in slowest relaxation times of Ā.
    pub t_final_relax: f64,
    /// Start of the averaging window, same units.
    pub burn_in_relax: f64,
    pub sample_every: usize,
    /// How many trajectories to dump as CSV.
    pub dump: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<[f64; 4]>,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            n_traj: 1,
            seed: 0,
            dt_scale: 1.0,
            t_final_relax: 40.0,
            burn_in_relax: 10.0,
            sample_every: 10,
            dump: 1,
            mu0: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt_factor: f64,
    pub tol: f64,
    pub max_time_factor: f64,
    pub backaction: BackactionScaling,
    pub channel_mode: ChannelMode,
    pub trajectory: TrajectoryConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SteadyOptions::default();
        Self {
            dt_factor: s.dt_factor,
            tol: s.tol,
            max_time_factor: s.max_time_factor,
            backaction: BackactionScaling::default(),
            channel_mode: ChannelMode::default(),
            trajectory: TrajectoryConfig::default(),
        }
    }
}

/// Columns of the sweep table that may be filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureName {
    #[serde(rename = "E_n")]
    EN,
    #[serde(rename = "S_12")]
    S12,
    #[serde(rename = "S_21")]
    S21,
    #[serde(rename = "purity")]
    Purity,
    #[serde(rename = "fidelity")]
    Fidelity,
}

pub const ALL_MEASURES: [MeasureName; 5] = [
    MeasureName::EN,
    MeasureName::S12,
    MeasureName::S21,
    MeasureName::Purity,
    MeasureName::Fidelity,
];

fn default_measures() -> Vec<MeasureName> {
    ALL_MEASURES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    /// JSON summary with solver diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    /// Trajectory dumps are written to `<prefix>_<stream>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_prefix: Option<String>,
    #[serde(default = "default_measures")]
    pub measures: Vec<MeasureName>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            summary: None,
            trajectory_prefix: None,
            measures: default_measures(),
        }
    }
}

/// Scenario file exactly as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub modes: [ModeConfig; 2],
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub measurement: MeasurementSection,
    #[serde(default)]
    pub feedback: FeedbackSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::scenario(json_path_hint(&e), e.to_string()))
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

fn json_path_hint(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    format!("line {}", e.line())
}

/// One resolved curve of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub params: SystemParams,
    pub meas: MeasurementConfig,
    pub gains: FeedbackGains,
    pub mpa: MpaKind,
    /// G_R2/G_R1 on the `gain_R1` axis.
    pub ratio: f64,
    /// Fixed G_R1 (rad/s) on the `gain_ratio` axis.
    pub gain_r1: f64,
}

/// Sweep axis with its grid in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: Axis,
    /// Grid in file units (what the CSV reports).
    pub display: Vec<f64>,
    pub values: Vec<f64>,
    pub series: Vec<Series>,
}

/// Model inputs at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub params: SystemParams,
    pub meas: MeasurementConfig,
    pub gains: FeedbackGains,
}

/// A validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: SystemParams,
    pub meas: MeasurementConfig,
    pub gains: FeedbackGains,
    pub sweep: Option<Sweep>,
    pub steady: SteadyOptions,
    pub scaling: BackactionScaling,
    pub channel_mode: ChannelMode,
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::scenario(key, "must be finite"))
    }
}

fn resolve_mode(i: usize, m: &ModeConfig) -> Result<MagnonMode> {
    let key = |f: &str| format!("modes[{i}].{f}");
    let omega = ghz(finite(&key("omega_m_GHz"), m.omega_m_ghz)?);
    if omega <= 0.0 {
        return Err(Error::scenario(key("omega_m_GHz"), "must be positive"));
    }
    let kappa = mhz(finite(&key("kappa_MHz"), m.kappa_mhz)?);
    if kappa < 0.0 {
        return Err(Error::scenario(key("kappa_MHz"), "must be non-negative"));
    }
    let n_bar = match (m.t_mk, m.n_bar) {
        (Some(_), Some(_)) => return Err(Error::scenario(key("T_mK"), "give either T_mK or n_bar, not both")),
        (Some(t), None) => {
            if !(finite(&key("T_mK"), t)? >= 0.0) {
                return Err(Error::scenario(key("T_mK"), "must be non-negative"));
            }
            thermal_occupation(omega, t * 1e-3)
        }
        (None, Some(n)) => {
            if !(finite(&key("n_bar"), n)? >= 0.0) {
                return Err(Error::scenario(key("n_bar"), "must be non-negative"));
            }
            n
        }
        (None, None) => 0.0,
    };
    let mode = MagnonMode::new(omega, kappa)
        .with_n_bar(n_bar)
        .with_mpa(mhz(finite(&key("K_tilde_MHz"), m.k_tilde_mhz)?))
        .with_detuning(mhz(finite(&key("Delta_MHz"), m.delta_mhz)?));
    mode.validate().map_err(|e| Error::scenario(format!("modes[{i}]"), e.to_string()))?;
    Ok(mode)
}

fn coupling_from(gamma_r: f64, d: Option<f64>, gamma_l_mhz: Option<f64>, kd: f64) -> Result<WaveguideCoupling> {
    let c = match (d, gamma_l_mhz) {
        (Some(_), Some(_)) => return Err(Error::scenario("coupling.D", "give either D or gamma_L_MHz, not both")),
        (Some(d), None) => WaveguideCoupling::from_chirality(gamma_r, d, kd),
        (None, Some(gl)) => WaveguideCoupling::new(mhz(gl), gamma_r, kd),
        (None, None) => return Err(Error::scenario("coupling.D", "one of D or gamma_L_MHz is required")),
    };
    c.map_err(|e| Error::scenario("coupling", e.to_string()))
}

fn measurement_from(eta_l: f64, eta_r: f64, theta_l: f64, theta_r: f64) -> Result<MeasurementConfig> {
    MeasurementConfig::new(eta_l, eta_r, theta_l, theta_r).map_err(|e| Error::scenario("measurement", e.to_string()))
}

fn gains_from(g: &[f64; 8]) -> Result<FeedbackGains> {
    let mut si = [0.0; 8];
    for (i, v) in g.iter().enumerate() {
        si[i] = mhz(finite(&format!("feedback.gains_MHz[{i}]"), *v)?);
    }
    Ok(FeedbackGains::from_array(si))
}

/// Replaces the right-port gains with G_R1 on mode 1 and G_R2 on mode 2.
fn with_right_gains(base: &FeedbackGains, g1: f64, g2: f64) -> FeedbackGains {
    let mut v = base.to_array();
    v[4] = g1;
    v[5] = g1;
    v[6] = g2;
    v[7] = g2;
    FeedbackGains::from_array(v)
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self> {
        let mode_1 = resolve_mode(0, &config.modes[0])?;
        let mode_2 = resolve_mode(1, &config.modes[1])?;
        let c = &config.coupling;
        let gamma_r = mhz(finite("coupling.gamma_R_MHz", c.gamma_r_mhz)?);
        let kd = c.kd.resolve("coupling.kd")?;
        let coupling = coupling_from(gamma_r, c.d, c.gamma_l_mhz, kd)?;
        let params = SystemParams::new(mode_1, mode_2, coupling).map_err(|e| Error::scenario("modes", e.to_string()))?;
        let m = &config.measurement;
        let meas = measurement_from(
            m.eta_l,
            m.eta_r,
            m.theta_l.resolve("measurement.theta_L")?,
            m.theta_r.resolve("measurement.theta_R")?,
        )?;
        let gains = gains_from(&config.feedback.gains_mhz)?;
        let s = &config.solver;
        for (key, v) in [("solver.dt_factor", s.dt_factor), ("solver.tol", s.tol), ("solver.max_time_factor", s.max_time_factor)] {
            if !(finite(key, v)? > 0.0) {
                return Err(Error::scenario(key, "must be positive"));
            }
        }
        let t = &s.trajectory;
        if !(t.dt_scale > 0.0 && t.dt_scale.is_finite()) {
            return Err(Error::scenario("solver.trajectory.dt_scale", "must be positive"));
        }
        if !(t.t_final_relax > 0.0 && t.burn_in_relax >= 0.0 && t.burn_in_relax < t.t_final_relax) {
            return Err(Error::scenario(
                "solver.trajectory.burn_in_relax",
                "need 0 <= burn_in_relax < t_final_relax",
            ));
        }
        let steady = SteadyOptions {
            dt_factor: s.dt_factor,
            tol: s.tol,
            max_time_factor: s.max_time_factor,
        };
        let mut scenario = Self {
            params,
            meas,
            gains,
            sweep: None,
            steady,
            scaling: s.backaction,
            channel_mode: s.channel_mode,
            config,
        };
        if let Some(sw) = scenario.config.sweep.clone() {
            scenario.sweep = Some(scenario.resolve_sweep(&sw)?);
        }
        Ok(scenario)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_config(ScenarioConfig::from_json(text)?)
    }

    /// Overrides the back-action scaling and channel mode (CLI flags).
    pub fn set_filter(&mut self, scaling: BackactionScaling, mode: ChannelMode) {
        self.scaling = scaling;
        self.channel_mode = mode;
        self.config.solver.backaction = scaling;
        self.config.solver.channel_mode = mode;
    }

    fn resolve_sweep(&self, sw: &SweepConfig) -> Result<Sweep> {
        let lo = sw.lo.resolve("sweep.lo")?;
        let hi = sw.hi.resolve("sweep.hi")?;
        if sw.points == 0 {
            return Err(Error::scenario("sweep.points", "must be at least 1"));
        }
        if sw.axis == Axis::D && !(lo > -1.0 && lo <= 1.0 && hi > -1.0 && hi <= 1.0) {
            return Err(Error::scenario("sweep.lo", "D range must lie in (-1, 1]"));
        }
        finite("sweep.ratio", sw.ratio)?;
        let display: Vec<f64> = if sw.points == 1 {
            vec![lo]
        } else {
            (0..sw.points)
                .map(|i| lo + (hi - lo) * i as f64 / (sw.points - 1) as f64)
                .collect()
        };
        let values = display.iter().map(|v| v * sw.axis.scale()).collect();
        let default_r1 = match sw.gain_r1_mhz {
            Some(g) => mhz(finite("sweep.gain_R1_MHz", g)?),
            None => self.gains.g_x[1][0],
        };
        let base = SeriesConfig {
            label: String::new(),
            ..Default::default()
        };
        let list: Vec<SeriesConfig> = if sw.series.is_empty() { vec![base] } else { sw.series.clone() };
        let mut series = Vec::with_capacity(list.len());
        for (i, sc) in list.iter().enumerate() {
            series.push(self.resolve_series(i, sc, sw, default_r1)?);
        }
        Ok(Sweep {
            axis: sw.axis,
            display,
            values,
            series,
        })
    }

    fn resolve_series(&self, i: usize, sc: &SeriesConfig, sw: &SweepConfig, default_r1: f64) -> Result<Series> {
        let key = |f: &str| format!("sweep.series[{i}].{f}");
        let mut params = self.params;
        let kd = match &sc.kd {
            Some(a) => a.resolve(&key("kd"))?,
            None => params.coupling.kd,
        };
        params.coupling = match sc.d {
            Some(d) => WaveguideCoupling::from_chirality(params.coupling.gamma_r, d, kd)
                .map_err(|e| Error::scenario(key("D"), e.to_string()))?,
            None => WaveguideCoupling { kd, ..params.coupling },
        };
        let mpa = sc.mpa.unwrap_or(sw.mpa);
        if let Some(k) = sc.k_tilde_mhz {
            params = mpa.apply(&params, mhz(finite(&key("K_tilde_MHz"), k)?));
        }
        let meas = MeasurementConfig {
            eta_l: sc.eta_l.unwrap_or(self.meas.eta_l),
            eta_r: sc.eta_r.unwrap_or(self.meas.eta_r),
            ..self.meas
        };
        meas.validate().map_err(|e| Error::scenario(key("eta"), e.to_string()))?;
        let ratio = finite(&key("ratio"), sc.ratio.unwrap_or(sw.ratio))?;
        let gain_r1 = match sc.gain_r1_mhz {
            Some(g) => mhz(finite(&key("gain_R1_MHz"), g)?),
            None => default_r1,
        };
        Ok(Series {
            label: sc.label.clone(),
            params,
            meas,
            gains: self.gains,
            mpa,
            ratio,
            gain_r1,
        })
    }

    /// Inputs at the base configuration (the `steady` command).
    pub fn base_point(&self) -> Point {
        Point {
            params: self.params,
            meas: self.meas,
            gains: self.gains,
        }
    }
}

impl Series {
    /// Inputs with the axis set to `value` (SI units).
    pub fn point(&self, axis: Axis, value: f64) -> Result<Point> {
        let mut p = Point {
            params: self.params,
            meas: self.meas,
            gains: self.gains,
        };
        match axis {
            Axis::Kd => p.params.coupling.kd = value,
            Axis::KTilde => p.params = self.mpa.apply(&self.params, value),
            Axis::D => {
                let c = &self.params.coupling;
                p.params.coupling = WaveguideCoupling::from_chirality(c.gamma_r, value, c.kd)?;
            }
            Axis::GainR1 => p.gains = with_right_gains(&self.gains, value, self.ratio * value),
            Axis::GainRatio => p.gains = with_right_gains(&self.gains, self.gain_r1, value * self.gain_r1),
        }
        p.params.validate()?;
        Ok(p)
    }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 8] = ["fig2a", "fig2b", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

fn preset_mode() -> ModeConfig {
    ModeConfig {
        omega_m_ghz: 10.0,
        kappa_mhz: 1.0,
        t_mk: Some(30.0),
        n_bar: None,
        k_tilde_mhz: 0.0,
        delta_mhz: 0.0,
    }
}

fn base_config(name: &str, kd: Angle, d: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: Some(name.to_string()),
        modes: [preset_mode(), preset_mode()],
        coupling: CouplingConfig {
            gamma_r_mhz: 10.0,
            d: Some(d),
            gamma_l_mhz: None,
            kd,
        },
        measurement: MeasurementSection::default(),
        feedback: FeedbackSection::default(),
        sweep: None,
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
    }
}

fn detected() -> MeasurementSection {
    MeasurementSection {
        eta_l: 1.0,
        eta_r: 1.0,
        theta_l: Angle::from("0.5pi"),
        theta_r: Angle::Value(0.0),
    }
}

const PRESET_D: [f64; 3] = [0.0, 0.5, 1.0];

fn d_series(mpa: Option<MpaKind>, prefix: &str) -> Vec<SeriesConfig> {
    PRESET_D
        .iter()
        .map(|&d| SeriesConfig {
            label: format!("{prefix}D={d}"),
            d: Some(d),
            mpa,
            ..Default::default()
        })
        .collect()
}

fn kind_d_series() -> Vec<SeriesConfig> {
    let mut s = d_series(Some(MpaKind::Symmetric), "sym ");
    s.extend(d_series(Some(MpaKind::Asymmetric), "asym "));
    s
}

fn k_sweep(hi: f64, points: usize, series: Vec<SeriesConfig>) -> SweepConfig {
    SweepConfig {
        axis: Axis::KTilde,
        lo: Angle::Value(0.0),
        hi: Angle::Value(hi),
        points,
        mpa: MpaKind::Symmetric,
        ratio: 1.0,
        gain_r1_mhz: None,
        series,
    }
}

/// Scenario of a built-in preset. The feedback preset (`fig8`) carries
/// K̃ = 0; its runner fills in the searched K̃ per MPA kind.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let kd_int = Angle::Value(0.0);
    let kd_half = Angle::from("0.5pi");
    let cfg = match name {
        "fig2a" | "fig2b" => {
            let (mpa, k) = if name == "fig2a" {
                (MpaKind::Symmetric, 0.24)
            } else {
                (MpaKind::Asymmetric, 0.48)
            };
            let mut c = base_config(name, kd_int, 0.0);
            c.modes[0].k_tilde_mhz = k;
            if mpa == MpaKind::Symmetric {
                c.modes[1].k_tilde_mhz = k;
            }
            c.sweep = Some(SweepConfig {
                axis: Axis::Kd,
                lo: Angle::Value(0.0),
                hi: Angle::from("2pi"),
                points: 201,
                mpa,
                ratio: 1.0,
                gain_r1_mhz: None,
                series: d_series(None, ""),
            });
            c
        }
        "fig3" | "fig4" => {
            let kd = if name == "fig3" { kd_int } else { kd_half };
            let mut c = base_config(name, kd, 0.0);
            c.sweep = Some(k_sweep(6.0, 301, kind_d_series()));
            c
        }
        "fig5" | "fig6" => {
            let kd = if name == "fig5" { kd_int } else { kd_half };
            let mut c = base_config(name, kd, 0.0);
            c.measurement = detected();
            c.sweep = Some(k_sweep(8.0, 401, kind_d_series()));
            c
        }
        "fig7" => {
            let mut c = base_config(name, kd_int, 0.0);
            c.measurement = detected();
            let mut series = Vec::new();
            for (mpa, tag) in [(MpaKind::Symmetric, "sym"), (MpaKind::Asymmetric, "asym")] {
                for eta in [0.0, 1.0] {
                    for &d in &PRESET_D {
                        series.push(SeriesConfig {
                            label: format!("{tag} eta={eta} D={d}"),
                            d: Some(d),
                            mpa: Some(mpa),
                            eta_l: Some(eta),
                            eta_r: Some(eta),
                            ..Default::default()
                        });
                    }
                }
            }
            c.sweep = Some(k_sweep(8.0, 401, series));
            c.output.measures = vec![MeasureName::Purity, MeasureName::EN];
            c
        }
        "fig8" => {
            let mut c = base_config(name, kd_int, 1.0);
            c.measurement = detected();
            c.feedback.gains_mhz = [0.0, 0.0, 0.0, 0.0, 20.0, 20.0, 20.0, 20.0];
            let series = vec![
                SeriesConfig {
                    label: "sym ratio".into(),
                    mpa: Some(MpaKind::Symmetric),
                    gain_r1_mhz: Some(20.0),
                    ..Default::default()
                },
                SeriesConfig {
                    label: "asym ratio".into(),
                    mpa: Some(MpaKind::Asymmetric),
                    gain_r1_mhz: Some(20.0),
                    ..Default::default()
                },
            ];
            c.sweep = Some(SweepConfig {
                axis: Axis::GainRatio,
                lo: Angle::Value(0.0),
                hi: Angle::Value(4.0),
                points: 81,
                mpa: MpaKind::Symmetric,
                ratio: 1.0,
                gain_r1_mhz: Some(20.0),
                series,
            });
            c
        }
        _ => {
            return Err(Error::scenario(
                "preset",
                format!("unknown preset `{name}` (expected one of {})", PRESETS.join(", ")),
            ))
        }
    };
    Ok(cfg)
}
