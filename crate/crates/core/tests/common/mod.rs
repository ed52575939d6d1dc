#![allow(dead_code)]

use magsteer_core::model::{ghz, mhz};
use magsteer_core::{thermal_occupation, Complex, DMatrix, DVector, MagnonMode, SystemParams, WaveguideCoupling};

type C64 = Complex<f64>;

/// Two modes at 10 GHz with κ/2π = 1 MHz at 30 mK, Γ_R/2π = 10 MHz.
pub fn base_params(d: f64, kd: f64) -> SystemParams {
    let omega = ghz(10.0);
    let mode = MagnonMode::new(omega, mhz(1.0)).with_n_bar(thermal_occupation(omega, 0.03));
    SystemParams::new(mode, mode, WaveguideCoupling::from_chirality(mhz(10.0), d, kd).unwrap()).unwrap()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
}

/// Physical two-mode state S diag(ν₁, ν₁, ν₂, ν₂) Sᵀ built from phase
/// rotations, single-mode squeezers, a beam splitter and a two-mode squeezer.
pub fn random_state(nu1: f64, nu2: f64, r: [f64; 4], phi: [f64; 4]) -> DMatrix<f64> {
    let rot = |i: usize, j: usize, t: f64| {
        let mut m = DMatrix::<f64>::identity(4, 4);
        let (c, s) = (t.cos(), t.sin());
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(i, j)] = s;
        m[(j, i)] = -s;
        m
    };
    let bs = |t: f64| {
        let mut m = DMatrix::<f64>::identity(4, 4);
        let (c, s) = (t.cos(), t.sin());
        for q in 0..2 {
            m[(q, q)] = c;
            m[(q + 2, q + 2)] = c;
            m[(q, q + 2)] = s;
            m[(q + 2, q)] = -s;
        }
        m
    };
    let sq = |mode: usize, r: f64| {
        let mut m = DMatrix::<f64>::identity(4, 4);
        m[(2 * mode, 2 * mode)] = r.exp();
        m[(2 * mode + 1, 2 * mode + 1)] = (-r).exp();
        m
    };
    // two-mode squeezer as the positive square root of 2σ_TMSV
    let (c, s) = ((2.0 * r[2]).cosh(), (2.0 * r[2]).sinh());
    let tms = DMatrix::from_row_slice(4, 4, &[c, 0.0, s, 0.0, 0.0, c, 0.0, -s, s, 0.0, c, 0.0, 0.0, -s, 0.0, c]);
    let e = tms.symmetric_eigen();
    let p = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose();
    let s = rot(0, 1, phi[3]) * rot(0, 1, phi[0]) * rot(2, 3, phi[1]) * sq(0, r[0]) * sq(1, r[1]) * bs(phi[2]) * p * sq(1, r[3]);
    let base = DMatrix::from_diagonal(&DVector::from_vec(vec![nu1, nu1, nu2, nu2]));
    let out = &s * base * s.transpose();
    (&out + out.transpose()) * 0.5
}

/// Sparse operator on the truncated two-mode Fock space.
struct Sparse(Vec<(usize, usize, C64)>);

impl Sparse {
    fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut e = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)].norm() > 1e-14 {
                    e.push((i, j, m[(i, j)]));
                }
            }
        }
        Sparse(e)
    }

    /// out += A ρ
    fn left(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, scale: C64) {
        let d = rho.ncols();
        for &(i, k, v) in &self.0 {
            let v = v * scale;
            for j in 0..d {
                out[(i, j)] += v * rho[(k, j)];
            }
        }
    }

    /// out += ρ A†
    fn right_adjoint(&self, rho: &DMatrix<C64>, out: &mut DMatrix<C64>, scale: C64) {
        let d = rho.nrows();
        for &(j, k, v) in &self.0 {
            let v = v.conj() * scale;
            for i in 0..d {
                out[(i, j)] += rho[(i, k)] * v;
            }
        }
    }
}

/// Rates in units of 2π·MHz.
#[derive(Debug, Clone, Copy)]
pub struct FockModel {
    pub kappa: f64,
    pub gamma_l: f64,
    pub gamma_r: f64,
    pub kd: f64,
    pub k_tilde: [f64; 2],
    pub delta: [f64; 2],
}

/// Steady unconditional covariance of the linearised chiral master equation,
/// integrated from the vacuum with RK4 on a Fock space truncated at `cutoff`
/// levels per mode. Returns σ and the final ‖dρ/dt‖_max.
pub fn fock_steady_covariance(model: &FockModel, cutoff: usize, dt: f64, t_max: f64) -> (DMatrix<f64>, f64) {
    let n = cutoff;
    let dim = n * n;
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i_unit = C64::new(0.0, 1.0);
    let mut m1 = DMatrix::<C64>::zeros(dim, dim);
    let mut m2 = DMatrix::<C64>::zeros(dim, dim);
    for a in 0..n {
        for b in 0..n {
            if a > 0 {
                m1[((a - 1) * n + b, a * n + b)] = C64::new((a as f64).sqrt(), 0.0);
            }
            if b > 0 {
                m2[(a * n + b - 1, a * n + b)] = C64::new((b as f64).sqrt(), 0.0);
            }
        }
    }
    let dag = |m: &DMatrix<C64>| m.adjoint();
    let e = C64::from_polar(1.0, model.kd);
    let (gl, gr) = (model.gamma_l, model.gamma_r);
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    for (j, m) in [&m1, &m2].into_iter().enumerate() {
        h += (m * m + dag(m) * dag(m)) * C64::new(model.k_tilde[j], 0.0);
        h += dag(m) * m * C64::new(model.delta[j], 0.0);
    }
    let left = dag(&m1) * &m2 * e;
    let right = dag(&m2) * &m1 * e;
    h += (&left - dag(&left)) * (-i_unit * gl / 2.0);
    h += (&right - dag(&right)) * (-i_unit * gr / 2.0);
    let jumps = [
        (&m1 + &m2 * e) * C64::new(gl.sqrt(), 0.0),
        (&m1 + &m2 * e.conj()) * C64::new(gr.sqrt(), 0.0),
        &m1 * C64::new(model.kappa.sqrt(), 0.0),
        &m2 * C64::new(model.kappa.sqrt(), 0.0),
    ];
    let mut h_eff = h.clone();
    for c in &jumps {
        h_eff -= dag(c) * c * (i_unit * 0.5);
    }
    let h_eff = Sparse::from_dense(&h_eff);
    let jumps: Vec<Sparse> = jumps.iter().map(Sparse::from_dense).collect();

    let rhs = |rho: &DMatrix<C64>| {
        let mut out = DMatrix::<C64>::zeros(dim, dim);
        h_eff.left(rho, &mut out, -i_unit);
        h_eff.right_adjoint(rho, &mut out, i_unit);
        for c in &jumps {
            let mut tmp = DMatrix::<C64>::zeros(dim, dim);
            c.left(rho, &mut tmp, one);
            c.right_adjoint(&tmp, &mut out, one);
        }
        out
    };

    let mut rho = DMatrix::<C64>::from_element(dim, dim, zero);
    rho[(0, 0)] = one;
    let steps = (t_max / dt).ceil() as usize;
    let mut rate = f64::INFINITY;
    for _ in 0..steps {
        let k1 = rhs(&rho);
        rate = k1.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if rate < 1e-10 {
            break;
        }
        let k2 = rhs(&(&rho + &k1 * C64::new(dt / 2.0, 0.0)));
        let k3 = rhs(&(&rho + &k2 * C64::new(dt / 2.0, 0.0)));
        let k4 = rhs(&(&rho + &k3 * C64::new(dt, 0.0)));
        rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    }
    let s2 = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let quad = [
        (&m1 + dag(&m1)) * s2,
        (&m1 - dag(&m1)) * (-i_unit * s2),
        (&m2 + dag(&m2)) * s2,
        (&m2 - dag(&m2)) * (-i_unit * s2),
    ];
    let trace = rho.trace();
    let mut sigma = DMatrix::<f64>::zeros(4, 4);
    for a in 0..4 {
        for b in 0..4 {
            let sym = (&quad[a] * &quad[b] + &quad[b] * &quad[a]) * C64::new(0.5, 0.0);
            sigma[(a, b)] = ((&rho * sym).trace() / trace).re;
        }
    }
    (sigma, rate)
}
