//! Fixtures shared by the solver benchmarks.

use magsteer_core::model::mhz;
use magsteer_core::{
    thermal_occupation, CovarianceMatrix, MagnonMode, MeasurementConfig, MpaKind, SystemMatrices, SystemParams,
    WaveguideCoupling,
};

/// Two 10 GHz modes at 30 mK with D = 0.5, kd = 0.3π and K̃/2π = 1 MHz on mode 1.
pub fn params() -> SystemParams {
    let omega = mhz(1e4);
    let mode = MagnonMode::new(omega, mhz(1.0)).with_n_bar(thermal_occupation(omega, 0.03));
    let coupling = WaveguideCoupling::from_chirality(mhz(10.0), 0.5, 0.3 * std::f64::consts::PI).unwrap();
    MpaKind::Asymmetric.apply(&SystemParams::new(mode, mode, coupling).unwrap(), mhz(1.0))
}

/// The fixture with both ports detected.
pub fn measured() -> SystemMatrices {
    let meas = MeasurementConfig::new(1.0, 1.0, std::f64::consts::FRAC_PI_2, 0.0).unwrap();
    SystemMatrices::new(&params(), &meas).unwrap()
}

/// Conditional steady state of [`measured`].
pub fn conditional() -> CovarianceMatrix {
    magsteer_core::steady_conditional(&measured()).unwrap()
}
