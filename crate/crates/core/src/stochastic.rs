//! Euler–Maruyama trajectories of the filtered means μ̄ and the homodyne
//! currents they produce.
//!
//! Between samples the filter obeys dμ̄ = Āμ̄ dt + Σ_λ (σ_c b_λ − f_λ) dW_λ
//! with Ā = A − diag(G) under feedback; each channel records the current
//! increment dY_λ = r_λ·μ̄ dt + dW_λ.
//!
//! Seed contract: a trajectory with `(seed, stream)` draws its increments from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to `stream`, one standard normal
//! per channel per step, channel index fastest. Ensembles use streams
//! 0, 1, 2, … under one seed.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dynamics::{CovarianceMatrix, RiccatiTrajectory, DIVERGENCE_NORM};
use crate::error::{Error, Result};
use crate::matrices::{apply_feedback, FeedbackGains, SystemMatrices};

/// Conditional covariance driving the innovation gains.
#[derive(Debug, Clone, Copy)]
pub enum ConditionalCov<'a> {
    Steady(&'a CovarianceMatrix),
    /// Piecewise constant between the stored samples.
    Path(&'a RiccatiTrajectory),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOptions {
    /// Keep every n-th step.
    pub sample_every: usize,
    /// μ̄(0); zero when `None`.
    pub mu0: Option<DVector<f64>>,
    pub stream: u64,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            sample_every: 1,
            mu0: None,
            stream: 0,
        }
    }
}

/// One simulated realisation.
///
/// `currents[k][λ]` and `wiener[k][λ]` are the increments ∫I_λ dt and ∫dW_λ
/// accumulated over the steps between samples k−1 and k (zero at k = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub currents: Vec<Vec<f64>>,
    pub wiener: Vec<Vec<f64>>,
    pub seed: u64,
    pub stream: u64,
}

impl TrajectoryRecord {
    pub fn n_channels(&self) -> usize {
        self.currents.first().map_or(0, Vec::len)
    }

    /// Writes `t,x1,p1,x2,p2,I_L,I_R` (or a single `I` column for a flattened
    /// channel, none without measurement). Currents are the increments
    /// divided by the sample spacing.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.means.first().map_or(0, |m| m.len());
        let mut header: Vec<String> = vec!["t".into()];
        for j in 0..dim / 2 {
            header.push(format!("x{}", j + 1));
            header.push(format!("p{}", j + 1));
        }
        match self.n_channels() {
            0 => {}
            1 => header.push("I".into()),
            n => {
                let names = ["I_L", "I_R"];
                for c in 0..n {
                    header.push(names.get(c).map_or_else(|| format!("I_{c}"), |s| s.to_string()));
                }
            }
        }
        w.write_record(&header)?;
        for k in 0..self.times.len() {
            let mut row = vec![format!("{:.16e}", self.times[k])];
            row.extend(self.means[k].iter().map(|v| format!("{v:.16e}")));
            let span = if k == 0 { 0.0 } else { self.times[k] - self.times[k - 1] };
            for dy in &self.currents[k] {
                let i = if span > 0.0 { dy / span } else { 0.0 };
                row.push(format!("{i:.16e}"));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn gains_at(mats: &SystemMatrices, sigma: &DMatrix<f64>) -> Vec<DVector<f64>> {
    if !mats.is_measured() {
        return Vec::new();
    }
    mats.channels().iter().map(|c| c.gain(sigma)).collect()
}

/// Simulates one trajectory of the filtered means.
pub fn simulate_trajectory(
    mats: &SystemMatrices,
    sigma_c: ConditionalCov<'_>,
    gains: Option<&FeedbackGains>,
    dt: f64,
    t_final: f64,
    seed: u64,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRecord> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", "must be positive"));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::invalid("t_final", "must be non-negative"));
    }
    let n = mats.dim();
    let a_bar = match gains {
        Some(g) => {
            g.validate()?;
            apply_feedback(&mats.drift, g)
        }
        None => mats.drift.clone(),
    };
    let channels = if mats.is_measured() { mats.channels() } else { Vec::new() };
    let m = channels.len();
    let readout: Vec<DVector<f64>> = channels.iter().map(|c| c.r.clone()).collect();

    let mut mu = match &opts.mu0 {
        Some(v) => {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    rows: v.len(),
                    cols: 1,
                });
            }
            v.clone()
        }
        None => DVector::zeros(n),
    };
    let mut noise_gain = match sigma_c {
        ConditionalCov::Steady(s) => {
            crate::linalg::check_dim(s, n)?;
            gains_at(mats, s)
        }
        ConditionalCov::Path(p) => {
            if p.states.is_empty() {
                return Err(Error::invalid("sigma_c", "empty covariance path"));
            }
            gains_at(mats, &p.states[0])
        }
    };
    let mut path_idx = 0usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(opts.stream);
    let sqrt_dt = dt.sqrt();
    let steps = (t_final / dt).round() as usize;
    let every = opts.sample_every.max(1);

    let cap = steps / every + 2;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(cap),
        means: Vec::with_capacity(cap),
        currents: Vec::with_capacity(cap),
        wiener: Vec::with_capacity(cap),
        seed,
        stream: opts.stream,
    };
    rec.times.push(0.0);
    rec.means.push(mu.clone());
    rec.currents.push(vec![0.0; m]);
    rec.wiener.push(vec![0.0; m]);

    let mut acc_y = vec![0.0; m];
    let mut acc_w = vec![0.0; m];
    let mut dw = vec![0.0; m];
    let mut drift = DVector::zeros(n);
    for k in 1..=steps {
        let t = (k - 1) as f64 * dt;
        if let ConditionalCov::Path(p) = sigma_c {
            let mut moved = false;
            while path_idx + 1 < p.times.len() && p.times[path_idx + 1] <= t {
                path_idx += 1;
                moved = true;
            }
            if moved {
                noise_gain = gains_at(mats, &p.states[path_idx]);
            }
        }
        for (c, w) in dw.iter_mut().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = sqrt_dt * z;
            acc_w[c] += *w;
            acc_y[c] += readout[c].dot(&mu) * dt + *w;
        }
        drift.gemv(dt, &a_bar, &mu, 0.0);
        mu += &drift;
        for (g, w) in noise_gain.iter().zip(&dw) {
            mu.axpy(*w, g, 1.0);
        }
        let norm = mu.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(Error::ConditionalDivergence { t: k as f64 * dt, norm });
        }
        if k % every == 0 || k == steps {
            rec.times.push(k as f64 * dt);
            rec.means.push(mu.clone());
            rec.currents.push(std::mem::replace(&mut acc_y, vec![0.0; m]));
            rec.wiener.push(std::mem::replace(&mut acc_w, vec![0.0; m]));
        }
    }
    Ok(rec)
}

/// `n_traj` trajectories on streams 0..n_traj of `seed`, in stream order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    mats: &SystemMatrices,
    sigma_c: &CovarianceMatrix,
    gains: Option<&FeedbackGains>,
    dt: f64,
    t_final: f64,
    seed: u64,
    n_traj: usize,
    sample_every: usize,
) -> Vec<Result<TrajectoryRecord>> {
    (0..n_traj as u64)
        .into_par_iter()
        .map(|stream| {
            let opts = TrajectoryOptions {
                sample_every,
                mu0: None,
                stream,
            };
            simulate_trajectory(mats, ConditionalCov::Steady(sigma_c), gains, dt, t_final, seed, &opts)
        })
        .collect()
}

/// Σ μ̄μ̄ᵀ over the samples of one record inside `window`, with their count.
pub fn window_moment(record: &TrajectoryRecord, window: (f64, f64)) -> (DMatrix<f64>, usize) {
    let n = record.means.first().map_or(0, |m| m.len());
    let mut s = DMatrix::<f64>::zeros(n, n);
    let mut c = 0usize;
    for (t, mu) in record.times.iter().zip(&record.means) {
        if *t >= window.0 && *t <= window.1 {
            s.ger(1.0, mu, mu, 1.0);
            c += 1;
        }
    }
    (s, c)
}

/// Second moment ½⟨μ̄μ̄ᵀ + (μ̄μ̄ᵀ)ᵀ⟩ over every stored sample with
/// t_lo ≤ t ≤ t_hi of every record.
pub fn ensemble_stats(records: &[TrajectoryRecord], window: (f64, f64)) -> Result<DMatrix<f64>> {
    if records.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} trajectories, need at least 2", records.len())));
    }
    let (lo, hi) = window;
    if !(lo <= hi) {
        return Err(Error::invalid("window", "lower bound exceeds upper bound"));
    }
    let n = records[0].means.first().map_or(0, |m| m.len());
    for (i, r) in records.iter().enumerate() {
        let t_end = r.times.last().copied().unwrap_or(0.0);
        if hi > t_end * (1.0 + 1e-12) {
            return Err(Error::InsufficientSamples(format!(
                "window end {hi:.6e} beyond record {i} (ends at {t_end:.6e})"
            )));
        }
    }
    let (sum, count) = records
        .par_iter()
        .map(|r| window_moment(r, window))
        .reduce(|| (DMatrix::zeros(n, n), 0), |(a, ca), (b, cb)| (a + b, ca + cb));
    if count < 2 {
        return Err(Error::InsufficientSamples(format!("{count} samples inside the window")));
    }
    let mut out = sum / count as f64;
    crate::linalg::symmetrize(&mut out);
    Ok(out)
}
