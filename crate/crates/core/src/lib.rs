//! Gaussian moment dynamics of two Kerr-driven magnon modes coupled through a
//! chiral waveguide: matrix builders, Lyapunov and Riccati solvers, homodyne
//! trajectories, feedback, and entanglement/steering measures.
//!
//! Rates and frequencies are angular (rad/s). Quadratures are ordered
//! (x₁, p₁, x₂, p₂) with vacuum variance 1/2.

// `!(x > 0.0)` is used on purpose so that NaN lands in the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod matrices;
pub mod measures;
pub mod model;
pub mod scenario;
pub mod stochastic;
pub mod sweep;

pub use dynamics::{
    check_stability, ensemble_covariance, ensemble_covariance_from, integrate_riccati, numeric_threshold,
    solve_lyapunov, steady_conditional, steady_conditional_with, threshold_k, CovarianceMatrix, EnsembleCovariance,
    KdCase, MpaKind, StabilityReport, SteadyOptions,
};
pub use error::{Error, Result};
pub use matrices::{
    apply_feedback, build_chain, build_diffusion, build_drift, build_measurement, BackactionScaling, ChainSpec,
    ChannelMode, FeedbackGains, MeasurementConfig, SystemMatrices,
};
pub use measures::{
    compute_measures, fidelity, log_negativity, partial_transpose_spectrum, purity, steering, symplectic_spectrum,
    MeasureSet, SteeringDirection,
};
pub use model::{
    calibrate_mpa, chirality, kerr_coefficient, steady_amplitudes, te10_coupling, thermal_occupation, DriveConfig,
    MagnonMode, MpaTarget, SystemParams, WaveguideCoupling, WaveguideGeometry,
};
pub use nalgebra::{Complex, DMatrix, DVector};
pub use stochastic::{
    ensemble_stats, simulate_ensemble, window_moment, simulate_trajectory, ConditionalCov, TrajectoryOptions, TrajectoryRecord,
};
pub use scenario::{parse_scenario, preset, Angle, Axis, MeasureName, Scenario, ScenarioConfig, PRESETS};
pub use sweep::{
    locate_k_tilde, run_feedback, run_preset, run_steady, run_sweep, run_trajectory, write_csv, KMatch, PresetRun,
    SolverSettings, Summary, SweepRow, TrajectoryReport, CSV_HEADER,
};
