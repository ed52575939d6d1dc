//! Sweeps, feedback tables, trajectory ensembles and preset runs over a
//! [`Scenario`], with CSV and JSON output.
//!
//! Points are evaluated with a rayon parallel map; rows always come back in
//! series order, then axis order.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    check_stability, ensemble_covariance_from, lyapunov_residual, riccati_residual, solve_lyapunov,
    steady_conditional_with, CovarianceMatrix, MpaKind, SteadyOptions,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrices::{apply_feedback, BackactionScaling, ChannelMode, FeedbackGains, MeasurementConfig, SystemMatrices};
use crate::measures::{compute_measures, fidelity, MeasureSet};
use crate::model::{mhz, to_mhz, SystemParams};
use crate::scenario::{preset, Axis, MeasureName, Point, Scenario, ScenarioConfig, Series, ALL_MEASURES};
use crate::stochastic::{simulate_trajectory, window_moment, ConditionalCov, TrajectoryOptions, TrajectoryRecord};

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 10] = [
    "series",
    "axis",
    "value",
    "E_n",
    "S_12",
    "S_21",
    "purity",
    "stable_unconditional",
    "stable_conditional",
    "fidelity",
];

/// Solver diagnostics of one row.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RowDiagnostics {
    /// Relative Lyapunov residual of the unconditional state.
    pub lyapunov_residual: Option<f64>,
    /// ‖dσ/dt‖_F / ‖D‖_F at the conditional state.
    pub riccati_residual: Option<f64>,
    pub riccati_steps: Option<usize>,
    pub riccati_time: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub series: String,
    pub axis: String,
    /// Axis value in file units (rad, MHz or dimensionless).
    pub value: f64,
    /// Empty when no converged physical state is available.
    pub measures: Option<MeasureSet>,
    pub stable_unconditional: bool,
    pub stable_conditional: bool,
    pub fidelity: Option<f64>,
    pub diagnostics: RowDiagnostics,
}

/// Solver settings shared by every point of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub steady: SteadyOptions,
    pub scaling: BackactionScaling,
    pub channel_mode: ChannelMode,
}

impl SolverSettings {
    pub fn of(s: &Scenario) -> Self {
        Self {
            steady: s.steady,
            scaling: s.scaling,
            channel_mode: s.channel_mode,
        }
    }

    pub fn matrices(&self, params: &SystemParams, meas: &MeasurementConfig) -> Result<SystemMatrices> {
        SystemMatrices::with_options(params, meas, self.scaling, self.channel_mode)
    }
}

/// Unconditional and conditional steady states of one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointStates {
    pub mats: SystemMatrices,
    pub unconditional: Option<CovarianceMatrix>,
    /// σ_c when measured, otherwise the unconditional state.
    pub conditional: Option<CovarianceMatrix>,
    pub stable_unconditional: bool,
    pub stable_conditional: bool,
    pub diagnostics: RowDiagnostics,
}

fn note(diag: &mut RowDiagnostics, e: &Error) {
    if diag.error.is_none() {
        diag.error = Some(e.to_string());
    }
}

/// Solves the steady states at one point. Failures are recorded, not returned.
pub fn solve_point(params: &SystemParams, meas: &MeasurementConfig, settings: &SolverSettings) -> Result<PointStates> {
    let mats = settings.matrices(params, meas)?;
    let report = check_stability(&mats);
    let mut diag = RowDiagnostics::default();
    let unconditional = if report.unconditional_stable {
        match solve_lyapunov(&mats.drift, &mats.diffusion) {
            Ok(s) => {
                diag.lyapunov_residual = Some(lyapunov_residual(&mats.drift, &mats.diffusion, &s));
                Some(s)
            }
            Err(e) => {
                note(&mut diag, &e);
                None
            }
        }
    } else {
        None
    };
    let stable_unconditional = unconditional.is_some();
    let (conditional, stable_conditional) = if !mats.is_measured() {
        (unconditional.clone(), stable_unconditional)
    } else if !report.conditional_stable {
        diag.error = Some("conditional flow not detectable: an unstable mode is unobserved".into());
        (None, false)
    } else {
        match steady_conditional_with(&mats, &settings.steady) {
            Ok(s) => {
                diag.riccati_residual = Some(riccati_residual(&mats, &s.sigma));
                diag.riccati_steps = Some(s.steps);
                diag.riccati_time = Some(s.t);
                (Some(s.sigma), true)
            }
            Err(e) => {
                note(&mut diag, &e);
                (None, false)
            }
        }
    };
    Ok(PointStates {
        mats,
        unconditional,
        conditional,
        stable_unconditional,
        stable_conditional,
        diagnostics: diag,
    })
}

fn measures_of(sigma: &CovarianceMatrix, diag: &mut RowDiagnostics) -> Option<MeasureSet> {
    match compute_measures(sigma) {
        Ok(m) => Some(m),
        Err(e) => {
            note(diag, &e);
            None
        }
    }
}

/// Ensemble state under feedback and its fidelity with σ_c.
fn feedback_state(
    mats: &SystemMatrices,
    sigma_c: &CovarianceMatrix,
    gains: &FeedbackGains,
    diag: &mut RowDiagnostics,
) -> Option<(CovarianceMatrix, f64)> {
    let ens = match ensemble_covariance_from(mats, sigma_c, gains) {
        Ok(e) => e,
        Err(e) => {
            note(diag, &e);
            return None;
        }
    };
    match fidelity(sigma_c, &ens.ensemble) {
        Ok(f) => Some((ens.ensemble, f)),
        Err(e) => {
            note(diag, &e);
            None
        }
    }
}

/// How the measure columns of a row are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Measures of σ_c (of σ when unmeasured); fidelity F(σ_c, σ_e) if gains are set.
    Steady,
    /// Measures of σ_e = σ_c + σ̄_e and F(σ_c, σ_e).
    Feedback,
}

fn row_from(
    label: &str,
    axis: &str,
    value: f64,
    states: Result<PointStates>,
    gains: &FeedbackGains,
    kind: RowKind,
) -> SweepRow {
    let mut row = SweepRow {
        series: label.to_string(),
        axis: axis.to_string(),
        value,
        measures: None,
        stable_unconditional: false,
        stable_conditional: false,
        fidelity: None,
        diagnostics: RowDiagnostics::default(),
    };
    let st = match states {
        Ok(s) => s,
        Err(e) => {
            row.diagnostics.error = Some(e.to_string());
            return row;
        }
    };
    row.stable_unconditional = st.stable_unconditional;
    row.stable_conditional = st.stable_conditional;
    row.diagnostics = st.diagnostics;
    let Some(sigma_c) = &st.conditional else {
        return row;
    };
    let diag = &mut row.diagnostics;
    match kind {
        RowKind::Steady => {
            row.measures = measures_of(sigma_c, diag);
            if !gains.is_zero() {
                row.fidelity = feedback_state(&st.mats, sigma_c, gains, diag).map(|(_, f)| f);
            }
        }
        RowKind::Feedback => {
            if let Some((sigma_e, f)) = feedback_state(&st.mats, sigma_c, gains, diag) {
                row.measures = measures_of(&sigma_e, diag);
                row.fidelity = Some(f);
            }
        }
    }
    row
}

/// Row for the base configuration of `scenario`.
pub fn run_steady(scenario: &Scenario) -> SweepRow {
    let p = scenario.base_point();
    let states = solve_point(&p.params, &p.meas, &SolverSettings::of(scenario));
    row_from("", "none", 0.0, states, &p.gains, RowKind::Steady)
}

fn sweep_of(scenario: &Scenario) -> Result<&crate::scenario::Sweep> {
    scenario
        .sweep
        .as_ref()
        .ok_or_else(|| Error::scenario("sweep", "this command needs a `sweep` section"))
}

fn series_rows(series: &Series, axis: Axis, display: &[f64], values: &[f64], settings: &SolverSettings, kind: RowKind) -> Vec<SweepRow> {
    let points: Vec<(f64, Result<Point>)> = display
        .iter()
        .zip(values)
        .map(|(d, v)| (*d, series.point(axis, *v)))
        .collect();
    // σ_c does not depend on the gains, so gain axes solve it once.
    let shared = if axis.is_gain() {
        Some(solve_point(&series.params, &series.meas, settings))
    } else {
        None
    };
    points
        .into_par_iter()
        .map(|(d, p)| match p {
            Err(e) => row_from(&series.label, axis.name(), d, Err(e), &series.gains, kind),
            Ok(p) => {
                let states = match &shared {
                    Some(Ok(s)) => Ok(s.clone()),
                    Some(Err(e)) => Err(Error::scenario("sweep", e.to_string())),
                    None => solve_point(&p.params, &p.meas, settings),
                };
                row_from(&series.label, axis.name(), d, states, &p.gains, kind)
            }
        })
        .collect()
}

fn run_rows(scenario: &Scenario, kind: RowKind) -> Result<Vec<SweepRow>> {
    let sw = sweep_of(scenario)?;
    let settings = SolverSettings::of(scenario);
    Ok(sw
        .series
        .iter()
        .flat_map(|s| series_rows(s, sw.axis, &sw.display, &sw.values, &settings, kind))
        .collect())
}

/// Steady-state measures along the sweep axis.
pub fn run_sweep(scenario: &Scenario) -> Result<Vec<SweepRow>> {
    run_rows(scenario, RowKind::Steady)
}

/// Feedback table: measures of σ_e and F(σ_c, σ_e) along the sweep axis.
pub fn run_feedback(scenario: &Scenario) -> Result<Vec<SweepRow>> {
    let sw = sweep_of(scenario)?;
    if sw.series.iter().all(|s| !s.meas.is_active()) {
        return Err(Error::scenario("measurement", "feedback needs eta_L or eta_R > 0"));
    }
    run_rows(scenario, RowKind::Feedback)
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes rows under [`CSV_HEADER`]; measure columns not listed in `measures`
/// are left empty, as are all measures of unstable rows.
pub fn write_csv<W: Write>(rows: &[SweepRow], measures: &[MeasureName], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    let want = |m: MeasureName| measures.contains(&m);
    for r in rows {
        let cell = |m: MeasureName, f: fn(&MeasureSet) -> f64| match &r.measures {
            Some(ms) if want(m) => fmt_f(f(ms)),
            _ => String::new(),
        };
        let fid = match r.fidelity {
            Some(f) if want(MeasureName::Fidelity) => fmt_f(f),
            _ => String::new(),
        };
        w.write_record([
            r.series.clone(),
            r.axis.clone(),
            fmt_f(r.value),
            cell(MeasureName::EN, |m| m.e_n),
            cell(MeasureName::S12, |m| m.s_12),
            cell(MeasureName::S21, |m| m.s_21),
            cell(MeasureName::Purity, |m| m.purity),
            r.stable_unconditional.to_string(),
            r.stable_conditional.to_string(),
            fid,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[SweepRow], measures: &[MeasureName], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(rows, measures, std::io::BufWriter::new(f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub label: String,
    pub axis: String,
    pub points: usize,
    pub stable_unconditional: usize,
    pub stable_conditional: usize,
    pub max_e_n: Option<Extremum>,
    pub max_s_12: Option<Extremum>,
    pub max_s_21: Option<Extremum>,
    pub max_fidelity: Option<Extremum>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub series: String,
    pub value: f64,
    pub error: String,
}

/// JSON summary of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: Option<String>,
    pub command: String,
    pub backaction: BackactionScaling,
    pub channel_mode: ChannelMode,
    pub rows: usize,
    pub series: Vec<SeriesSummary>,
    pub max_lyapunov_residual: Option<f64>,
    pub max_riccati_residual: Option<f64>,
    pub max_riccati_steps: Option<usize>,
    pub failures: Vec<Failure>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub k_tilde_matches: Vec<KMatch>,
}

fn fold_max(acc: Option<f64>, v: Option<f64>) -> Option<f64> {
    match (acc, v) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn argmax(rows: &[&SweepRow], f: impl Fn(&SweepRow) -> Option<f64>) -> Option<Extremum> {
    rows.iter()
        .filter_map(|r| f(r).map(|v| (v, r.value)))
        .fold(None, |best: Option<Extremum>, (v, at)| match best {
            Some(b) if b.value >= v => Some(b),
            _ => Some(Extremum { value: v, at }),
        })
}

impl Summary {
    pub fn new(scenario: &Scenario, command: &str, rows: &[SweepRow]) -> Self {
        let mut keys: Vec<(String, String)> = Vec::new();
        for r in rows {
            let k = (r.series.clone(), r.axis.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let series = keys
            .into_iter()
            .map(|(label, axis)| {
                let rs: Vec<&SweepRow> = rows.iter().filter(|r| r.series == label && r.axis == axis).collect();
                SeriesSummary {
                    points: rs.len(),
                    stable_unconditional: rs.iter().filter(|r| r.stable_unconditional).count(),
                    stable_conditional: rs.iter().filter(|r| r.stable_conditional).count(),
                    max_e_n: argmax(&rs, |r| r.measures.map(|m| m.e_n)),
                    max_s_12: argmax(&rs, |r| r.measures.map(|m| m.s_12)),
                    max_s_21: argmax(&rs, |r| r.measures.map(|m| m.s_21)),
                    max_fidelity: argmax(&rs, |r| r.fidelity),
                    label,
                    axis,
                }
            })
            .collect();
        Self {
            name: scenario.config.name.clone(),
            command: command.to_string(),
            backaction: scenario.scaling,
            channel_mode: scenario.channel_mode,
            rows: rows.len(),
            series,
            max_lyapunov_residual: rows.iter().fold(None, |a, r| fold_max(a, r.diagnostics.lyapunov_residual)),
            max_riccati_residual: rows.iter().fold(None, |a, r| fold_max(a, r.diagnostics.riccati_residual)),
            max_riccati_steps: rows.iter().filter_map(|r| r.diagnostics.riccati_steps).max(),
            failures: rows
                .iter()
                .filter_map(|r| {
                    r.diagnostics.error.as_ref().map(|e| Failure {
                        series: r.series.clone(),
                        value: r.value,
                        error: e.clone(),
                    })
                })
                .collect(),
            k_tilde_matches: Vec::new(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        std::fs::write(path, s)?;
        Ok(())
    }
}

/// Closest conditional state to a target (E_n, S_12, S_21) along K̃.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMatch {
    pub mpa: MpaKind,
    pub target: [f64; 3],
    pub k_tilde_mhz: f64,
    pub measures: MeasureSet,
    /// Largest absolute deviation over the three quantities.
    pub distance: f64,
}

fn distance(m: &MeasureSet, target: &[f64; 3]) -> f64 {
    (m.e_n - target[0])
        .abs()
        .max((m.s_12 - target[1]).abs())
        .max((m.s_21 - target[2]).abs())
}

fn k_candidates(
    params: &SystemParams,
    meas: &MeasurementConfig,
    settings: &SolverSettings,
    kind: MpaKind,
    target: &[f64; 3],
    grid: Vec<f64>,
) -> Vec<(f64, MeasureSet, f64)> {
    grid.into_par_iter()
        .filter_map(|k| {
            let p = kind.apply(params, mhz(k));
            let st = solve_point(&p, meas, settings).ok()?;
            let m = compute_measures(st.conditional.as_ref()?).ok()?;
            Some((k, m, distance(&m, target)))
        })
        .collect()
}

/// Scans K̃/2π over [lo, hi] MHz on `points` nodes, then refines around
/// the best node on a grid ten times finer.
#[allow(clippy::too_many_arguments)]
pub fn locate_k_tilde(
    params: &SystemParams,
    meas: &MeasurementConfig,
    settings: &SolverSettings,
    kind: MpaKind,
    target: [f64; 3],
    lo_mhz: f64,
    hi_mhz: f64,
    points: usize,
) -> Result<KMatch> {
    if points < 2 || !(hi_mhz > lo_mhz) {
        return Err(Error::invalid("points", "need at least two nodes on a non-empty range"));
    }
    let step = (hi_mhz - lo_mhz) / (points - 1) as f64;
    let coarse: Vec<f64> = (0..points).map(|i| lo_mhz + step * i as f64).collect();
    let best = |c: Vec<(f64, MeasureSet, f64)>| c.into_iter().min_by(|a, b| a.2.total_cmp(&b.2));
    let (k0, _, _) = best(k_candidates(params, meas, settings, kind, &target, coarse))
        .ok_or_else(|| Error::InfeasibleTarget("no conditionally stable K_tilde in the search range".into()))?;
    let fine: Vec<f64> = (0..=20)
        .map(|i| k0 - step + step * i as f64 / 10.0)
        .filter(|k| *k >= lo_mhz && *k <= hi_mhz)
        .collect();
    let (k, measures, d) = best(k_candidates(params, meas, settings, kind, &target, fine)).expect("coarse node is in the fine grid");
    Ok(KMatch {
        mpa: kind,
        target,
        k_tilde_mhz: k,
        measures,
        distance: d,
    })
}

/// Quoted conditional (E_n, S_12, S_21) at full chirality under detection.
pub const FIG8_TARGETS: [(MpaKind, [f64; 3]); 2] = [
    (MpaKind::Symmetric, [0.656, 0.196, 0.0]),
    (MpaKind::Asymmetric, [0.859, 0.328, 0.147]),
];

/// Result of a preset run.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub rows: Vec<SweepRow>,
    pub summary: Summary,
}

/// Runs a built-in preset with the given filter options.
pub fn run_preset(name: &str, scaling: BackactionScaling, mode: ChannelMode) -> Result<PresetRun> {
    let mut config = preset(name)?;
    config.solver.backaction = scaling;
    config.solver.channel_mode = mode;
    if name != "fig8" {
        let scenario = Scenario::from_config(config.clone())?;
        let rows = run_sweep(&scenario)?;
        let summary = Summary::new(&scenario, &format!("preset {name}"), &rows);
        return Ok(PresetRun {
            config,
            scenario,
            rows,
            summary,
        });
    }
    let base = Scenario::from_config(config.clone())?;
    let settings = SolverSettings::of(&base);
    let mut matches = Vec::new();
    for (kind, target) in FIG8_TARGETS {
        matches.push(locate_k_tilde(&base.params, &base.meas, &settings, kind, target, 0.0, 8.0, 161)?);
    }
    // gain-ratio curves at G_R1/2π = 20 MHz, then G_R1 curves at the
    // ratios 2 (symmetric) and 1 (asymmetric)
    let sweep = config.sweep.as_mut().expect("fig8 preset has a sweep");
    for (s, m) in sweep.series.iter_mut().zip(&matches) {
        s.k_tilde_mhz = Some(m.k_tilde_mhz);
    }
    let ratio_cfg = config.clone();
    let mut gain_cfg = config.clone();
    {
        let gs = gain_cfg.sweep.as_mut().expect("fig8 preset has a sweep");
        gs.axis = Axis::GainR1;
        gs.lo = 0.0.into();
        gs.hi = 200.0.into();
        gs.points = 101;
        for (s, r) in gs.series.iter_mut().zip([2.0, 1.0]) {
            s.label = s.label.replace("ratio", "gain");
            s.ratio = Some(r);
            s.gain_r1_mhz = None;
        }
    }
    let ratio_sc = Scenario::from_config(ratio_cfg)?;
    let gain_sc = Scenario::from_config(gain_cfg)?;
    let mut rows = run_feedback(&ratio_sc)?;
    rows.extend(run_feedback(&gain_sc)?);
    let mut summary = Summary::new(&ratio_sc, "preset fig8", &rows);
    summary.k_tilde_matches = matches;
    Ok(PresetRun {
        config,
        scenario: ratio_sc,
        rows,
        summary,
    })
}

/// Ensemble statistics of a trajectory run against the Lyapunov oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub n_traj: usize,
    pub seed: u64,
    pub dt: f64,
    pub t_final: f64,
    pub window: (f64, f64),
    pub relaxation_time: f64,
    pub samples: usize,
    pub sample_cov: Vec<Vec<f64>>,
    pub oracle_cov: Vec<Vec<f64>>,
    /// ‖sample − oracle‖_F / ‖oracle‖_F; absent when the oracle vanishes.
    pub relative_mismatch: Option<f64>,
    pub absolute_mismatch: f64,
    pub failures: Vec<(u64, String)>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Simulates `n_traj` trajectories on streams 0..n_traj of `seed` and
/// compares the windowed second moment of μ̄ with the solution for σ̄_e.
/// The first `keep` records are returned for dumping.
pub fn run_trajectory(scenario: &Scenario, n_traj: usize, seed: u64, keep: usize) -> Result<(TrajectoryReport, Vec<TrajectoryRecord>)> {
    if n_traj == 0 {
        return Err(Error::scenario("solver.trajectory.n_traj", "must be at least 1"));
    }
    let tc = &scenario.config.solver.trajectory;
    let settings = SolverSettings::of(scenario);
    let p = scenario.base_point();
    let mats = settings.matrices(&p.params, &p.meas)?;
    let a_bar = apply_feedback(&mats.drift, &p.gains);
    let abscissa = linalg::spectral_abscissa(&linalg::eigenvalues(&a_bar));
    if !(abscissa < 0.0) {
        return Err(Error::UnstableDrift {
            max_re: abscissa,
            spectrum: linalg::eigenvalues(&a_bar),
        });
    }
    let relax = -1.0 / abscissa;
    let sigma_c = if mats.is_measured() {
        steady_conditional_with(&mats, &settings.steady)?.sigma
    } else {
        solve_lyapunov(&mats.drift, &mats.diffusion).unwrap_or_else(|_| CovarianceMatrix::vacuum(2))
    };
    let oracle = ensemble_covariance_from(&mats, &sigma_c, &p.gains)?.mean_cov;
    let fb = mats.with_feedback(&p.gains);
    let dt = tc.dt_scale * 1e-3 / fb.max_linewidth();
    let t_final = tc.t_final_relax * relax;
    let window = (tc.burn_in_relax * relax, t_final);
    let gains = if p.gains.is_zero() { None } else { Some(&p.gains) };
    let mu0 = tc.mu0.map(|v| nalgebra::DVector::from_row_slice(&v));

    let results: Vec<(u64, Result<TrajectoryRecord>)> = (0..n_traj as u64)
        .into_par_iter()
        .map(|stream| {
            let opts = TrajectoryOptions {
                sample_every: tc.sample_every,
                mu0: mu0.clone(),
                stream,
            };
            (stream, simulate_trajectory(&mats, ConditionalCov::Steady(&sigma_c), gains, dt, t_final, seed, &opts))
        })
        .collect();

    let n = mats.dim();
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut count = 0usize;
    let mut failures = Vec::new();
    let mut kept = Vec::new();
    let mut window_end = window.1;
    for (stream, r) in results {
        match r {
            Ok(rec) => {
                window_end = window_end.min(*rec.times.last().expect("record holds t = 0"));
                let (s, c) = window_moment(&rec, (window.0, window_end));
                sum += s;
                count += c;
                if kept.len() < keep {
                    kept.push(rec);
                }
            }
            Err(e) => failures.push((stream, e.to_string())),
        }
    }
    if count == 0 {
        return Err(Error::InsufficientSamples("no samples inside the averaging window".into()));
    }
    let mut sample = sum / count as f64;
    linalg::symmetrize(&mut sample);
    let absolute = (&sample - &oracle).norm();
    let on = oracle.norm();
    let report = TrajectoryReport {
        n_traj,
        seed,
        dt,
        t_final,
        window: (window.0, window_end),
        relaxation_time: relax,
        samples: count,
        sample_cov: rows_of(&sample),
        oracle_cov: rows_of(&oracle),
        relative_mismatch: if on > 0.0 { Some(absolute / on) } else { None },
        absolute_mismatch: absolute,
        failures,
    };
    Ok((report, kept))
}

/// Display units of an SI value on `axis`.
pub fn display_value(axis: Axis, si: f64) -> f64 {
    match axis {
        Axis::KTilde | Axis::GainR1 => to_mhz(si),
        _ => si,
    }
}

/// Every column of the table.
pub fn all_measures() -> Vec<MeasureName> {
    ALL_MEASURES.to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn fig3_small() -> Scenario {
        let mut c = preset("fig3").unwrap();
        let sw = c.sweep.as_mut().unwrap();
        sw.points = 31;
        sw.series.retain(|s| s.label.starts_with("asym"));
        Scenario::from_config(c).unwrap()
    }

    #[test]
    fn rows_come_back_in_axis_order() {
        let s = fig3_small();
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 3 * 31);
        for chunk in rows.chunks(31) {
            assert!(chunk.windows(2).all(|w| w[0].value < w[1].value && w[0].series == w[1].series));
        }
    }

    #[test]
    fn unstable_rows_have_empty_measures() {
        let s = fig3_small();
        let rows = run_sweep(&s).unwrap();
        assert!(rows.iter().any(|r| !r.stable_unconditional));
        for r in &rows {
            assert_eq!(r.measures.is_some(), r.stable_unconditional, "{r:?}");
        }
        let mut buf = Vec::new();
        write_csv(&rows, &all_measures(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let unstable = text.lines().find(|l| l.contains(",false,false,")).unwrap();
        assert!(unstable.contains(",,,,,false"));
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    }

    #[test]
    fn one_way_steering_in_the_cascade_sweep() {
        let s = fig3_small();
        let rows = run_sweep(&s).unwrap();
        let full: Vec<_> = rows.iter().filter(|r| r.series.ends_with("D=1")).collect();
        assert!(full.iter().filter_map(|r| r.measures).all(|m| m.s_21 <= 1e-9));
        assert!(full.iter().filter_map(|r| r.measures).any(|m| m.s_12 > 0.0));
    }

    #[test]
    fn single_point_sweep_equals_steady() {
        let text = r#"{
            "modes": [
                {"omega_m_GHz": 10, "kappa_MHz": 1, "K_tilde_MHz": 0.3},
                {"omega_m_GHz": 10, "kappa_MHz": 1, "K_tilde_MHz": 0.3}
            ],
            "coupling": {"gamma_R_MHz": 10, "D": 0.5, "kd": 0},
            "measurement": {"eta_L": 1, "eta_R": 1, "theta_L": "0.5pi"},
            "sweep": {"axis": "K_tilde", "lo": 0.3, "hi": 0.3, "points": 1}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        let steady = run_steady(&s);
        let rows = run_sweep(&s).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].measures, steady.measures);
        assert_eq!(rows[0].stable_conditional, steady.stable_conditional);
        assert!(steady.measures.is_some());
    }

    #[test]
    fn zero_gain_feedback_adds_mean_noise() {
        let mut c: ScenarioConfig = preset("fig8").unwrap();
        let sw = c.sweep.as_mut().unwrap();
        sw.series.truncate(1);
        sw.series[0].k_tilde_mhz = Some(2.0);
        sw.axis = Axis::GainR1;
        sw.lo = 0.0.into();
        sw.hi = 0.0.into();
        sw.points = 1;
        let s = Scenario::from_config(c).unwrap();
        let rows = run_feedback(&s).unwrap();
        let f = rows[0].fidelity.unwrap();
        assert!(f < 1.0 && f > 0.0, "{f}");
    }

    #[test]
    fn trajectory_runs_are_reproducible() {
        let mut c = preset("fig8").unwrap();
        c.modes[0].k_tilde_mhz = 1.0;
        c.modes[1].k_tilde_mhz = 1.0;
        c.solver.trajectory.t_final_relax = 5.0;
        c.solver.trajectory.burn_in_relax = 1.0;
        let s = Scenario::from_config(c).unwrap();
        let (r1, k1) = run_trajectory(&s, 3, 42, 1).unwrap();
        let (r2, k2) = run_trajectory(&s, 3, 42, 1).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(k1, k2);
        assert!(r1.failures.is_empty());
    }

    #[test]
    fn unmeasured_trajectory_has_no_currents() {
        let mut c = preset("fig3").unwrap();
        c.modes[0].k_tilde_mhz = 0.2;
        c.solver.trajectory.mu0 = Some([1.0, 0.0, 0.0, 0.0]);
        c.solver.trajectory.t_final_relax = 3.0;
        c.solver.trajectory.burn_in_relax = 1.0;
        let s = Scenario::from_config(c).unwrap();
        let (rep, recs) = run_trajectory(&s, 2, 1, 1).unwrap();
        assert_eq!(recs[0].n_channels(), 0);
        assert_eq!(rep.relative_mismatch, None);
        let first = recs[0].means.first().unwrap().norm();
        let last = recs[0].means.last().unwrap().norm();
        assert!(last < first * 0.2);
    }
}
