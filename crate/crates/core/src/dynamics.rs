//! Time evolution: Runge–Kutta integration of the vectorized master equation
//! and a Monte Carlo wave-function unraveling with exact jump timing.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::lindblad::{
    build_hamiltonian, build_liouvillian, devectorize_op, excited_projector, hermitian_part, lowering, re, vectorize, DensityMatrix,
    Ket, Mat4, Op2, ParamError, Pauli, StateError, SystemParams, Vec4, I,
};
use crate::spectral::{eigenvalues_closed_form, SpectralError};

pub const TRACE_DRIFT_TOL: f64 = 1e-12;
pub const NEGATIVITY_TOL: f64 = 1e-6;
/// Trajectories per deterministic reduction block.
const MC_BLOCK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("time grid must be non-empty, non-negative and strictly increasing (problem at index {index})")]
    InvalidGrid { index: usize },
    #[error("adaptive step size underflow at t = {t} (h = {h:.3e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("state became non-physical at t = {t}: minimum eigenvalue {min_eigenvalue:.3e}")]
    NonPhysical { t: f64, min_eigenvalue: f64, state: Box<Op2> },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("at least one trajectory is required")]
    NoTrajectories,
    #[error("the spectrum has no decaying mode, so no settling time exists")]
    NoRelaxation,
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integrator {
    /// Classical fourth-order Runge–Kutta; `None` selects 0.01 / max(Ω, γ, |Δ|).
    Rk4 { step: Option<f64> },
    /// Dormand–Prince 5(4) with error-per-step control.
    DormandPrince { rtol: f64, atol: f64, min_step: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Rk4 { step: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub integrator: Integrator,
    /// Nominal step for RK4, last accepted step for the adaptive pair.
    pub step: f64,
    pub renormalizations: usize,
    pub max_trace_drift: f64,
}

/// Population and Bloch-component estimates with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McTrajectory {
    pub times: Vec<f64>,
    /// Trajectory-averaged |ψ⟩⟨ψ| at each time.
    pub mean: Vec<Op2>,
    /// Sample standard errors of [P_e, ⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩] at each time.
    pub std_errors: Vec<[f64; 4]>,
    pub n_traj: usize,
    pub seed: u64,
    /// Mean number of jumps per trajectory over the whole grid, per channel.
    pub mean_jumps: [f64; 2],
    pub jump_std_errors: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Master(MasterTrajectory),
    MonteCarlo(McTrajectory),
}

fn check_grid(t_grid: &[f64]) -> Result<(), DynamicsError> {
    if t_grid.is_empty() {
        return Err(DynamicsError::InvalidGrid { index: 0 });
    }
    for (k, &t) in t_grid.iter().enumerate() {
        if !t.is_finite() || t < 0.0 || (k > 0 && t <= t_grid[k - 1]) {
            return Err(DynamicsError::InvalidGrid { index: k });
        }
    }
    Ok(())
}

pub fn default_step(p: &SystemParams) -> f64 {
    0.01 / p.scale()
}

/// Hermitian part with trace drift above [`TRACE_DRIFT_TOL`] removed; fails on
/// negativity beyond [`NEGATIVITY_TOL`].
fn condition(v: &Vec4, t: f64, drift: &mut f64, renorms: &mut usize) -> Result<Vec4, DynamicsError> {
    let mut m = hermitian_part(&devectorize_op(v));
    let trace = m.trace().re;
    let d = (trace - 1.0).abs();
    *drift = drift.max(d);
    if d > TRACE_DRIFT_TOL {
        debug!("renormalizing trace drift {d:.3e} at t = {t}");
        m /= re(trace);
        *renorms += 1;
    }
    let a = m[(0, 0)].re;
    let dd = m[(1, 1)].re;
    let lo = 0.5 * (a + dd) - (0.25 * (a - dd) * (a - dd) + m[(0, 1)].norm_sqr()).sqrt();
    if lo < -NEGATIVITY_TOL {
        return Err(DynamicsError::NonPhysical { t, min_eigenvalue: lo, state: Box::new(m) });
    }
    Ok(Vec4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
}

fn rk4_step(g: &Mat4, v: &Vec4, h: f64) -> Vec4 {
    let h = re(h);
    let k1 = g * v;
    let k2 = g * (v + k1 * (h * 0.5));
    let k3 = g * (v + k2 * (h * 0.5));
    let k4 = g * (v + k3 * h);
    v + (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * (h / 6.0)
}

const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One Dormand–Prince step: (fifth-order solution, error estimate).
fn dp_step(g: &Mat4, v: &Vec4, h: f64) -> (Vec4, Vec4) {
    let mut k = [Vec4::zeros(); 7];
    for s in 0..7 {
        let mut arg = *v;
        for (j, kj) in k.iter().enumerate().take(s) {
            arg += kj * re(h * DP_A[s][j]);
        }
        k[s] = g * arg;
    }
    let mut hi = *v;
    let mut err = Vec4::zeros();
    for s in 0..7 {
        hi += k[s] * re(h * DP_B5[s]);
        err += k[s] * re(h * (DP_B5[s] - DP_B4[s]));
    }
    (hi, err)
}

/// Integrates dρ/dt from ρ(0) = `rho0` and reports ρ at every grid time.
pub fn evolve_master(p: &SystemParams, rho0: &DensityMatrix, t_grid: &[f64], integrator: Integrator) -> Result<MasterTrajectory, DynamicsError> {
    check_grid(t_grid)?;
    let g = build_liouvillian(p).generator();
    let mut v = vectorize(rho0);
    let mut t = 0.0;
    let mut states = Vec::with_capacity(t_grid.len());
    let mut drift = 0.0;
    let mut renorms = 0;
    let mut step;
    match integrator {
        Integrator::Rk4 { step: h } => {
            let h = h.unwrap_or_else(|| default_step(p));
            if !(h > 0.0 && h.is_finite()) {
                return Err(DynamicsError::InvalidStep(h));
            }
            step = h;
            for &target in t_grid {
                let span = target - t;
                if span > 0.0 {
                    let n = (span / h).ceil().max(1.0) as usize;
                    let sub = span / n as f64;
                    for k in 0..n {
                        v = rk4_step(&g, &v, sub);
                        v = condition(&v, t + sub * (k + 1) as f64, &mut drift, &mut renorms)?;
                    }
                }
                t = target;
                states.push(DensityMatrix::from_matrix_unchecked(devectorize_op(&v)));
            }
        }
        Integrator::DormandPrince { rtol, atol, min_step } => {
            let mut h = default_step(p);
            step = h;
            for &target in t_grid {
                while t < target {
                    let hh = h.min(target - t);
                    let (next, err) = dp_step(&g, &v, hh);
                    let ratio = (0..4)
                        .map(|i| err[i].norm() / (atol + rtol * v[i].norm().max(next[i].norm())))
                        .fold(0.0, f64::max);
                    if ratio <= 1.0 {
                        t = if hh == target - t { target } else { t + hh };
                        v = condition(&next, t, &mut drift, &mut renorms)?;
                        step = hh;
                    }
                    let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
                    h = hh * factor;
                    if h < min_step && t < target {
                        return Err(DynamicsError::StepUnderflow { t, h });
                    }
                }
                states.push(DensityMatrix::from_matrix_unchecked(devectorize_op(&v)));
            }
        }
    }
    Ok(MasterTrajectory { times: t_grid.to_vec(), states, integrator, step, renormalizations: renorms, max_trace_drift: drift })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpChannel {
    /// √(αγ)·|g⟩⟨e|
    Decay,
    /// √((1−α)γ)·|e⟩⟨e|; leaves populations unchanged and only resets phase.
    Dephasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperatorSet {
    pub decay: Op2,
    pub dephasing: Op2,
    /// H − (i/2)Σ c_k†c_k
    pub h_eff: Op2,
}

impl JumpOperatorSet {
    pub fn new(p: &SystemParams) -> Self {
        let decay = lowering() * re(p.gamma0().sqrt());
        let dephasing = excited_projector() * re(p.gammaphi().sqrt());
        let loss = decay.adjoint() * decay + dephasing.adjoint() * dephasing;
        let h_eff = build_hamiltonian(p) - loss * (I * 0.5);
        Self { decay, dephasing, h_eff }
    }

    pub fn operator(&self, channel: JumpChannel) -> &Op2 {
        match channel {
            JumpChannel::Decay => &self.decay,
            JumpChannel::Dephasing => &self.dephasing,
        }
    }

    /// exp(−i H_eff t), exact for a 2×2 generator.
    pub fn propagator(&self, t: f64) -> Op2 {
        let m = self.h_eff * (-I);
        let tau = m.trace() * 0.5;
        let half_diff = (m[(0, 0)] - m[(1, 1)]) * 0.5;
        let k = (half_diff * half_diff + m[(0, 1)] * m[(1, 0)]).sqrt();
        let x = k * t;
        let sinhc = if x.norm() < 1e-4 { re(1.0) + x * x / 6.0 + x * x * x * x / 120.0 } else { x.sinh() / x };
        let traceless = m - Op2::identity() * tau;
        (Op2::identity() * x.cosh() + traceless * (sinhc * t)) * (tau * t).exp()
    }
}

/// The master-equation right-hand side rebuilt from the jump set:
/// −i(H_eff ρ − ρ H_eff†) + Σ c_k ρ c_k†.
pub fn unravelled_rhs(set: &JumpOperatorSet, rho: &Op2) -> Op2 {
    let drift = (set.h_eff * rho - rho * set.h_eff.adjoint()) * (-I);
    drift + set.decay * rho * set.decay.adjoint() + set.dephasing * rho * set.dephasing.adjoint()
}

struct Accumulator {
    rho: Vec<Op2>,
    sq: Vec<[f64; 4]>,
    jumps: [f64; 2],
    jumps_sq: [f64; 2],
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self { rho: vec![Op2::zeros(); n], sq: vec![[0.0; 4]; n], jumps: [0.0; 2], jumps_sq: [0.0; 2] }
    }

    fn merge(&mut self, other: &Accumulator) {
        for (a, b) in self.rho.iter_mut().zip(&other.rho) {
            *a += b;
        }
        for (a, b) in self.sq.iter_mut().zip(&other.sq) {
            for k in 0..4 {
                a[k] += b[k];
            }
        }
        for k in 0..2 {
            self.jumps[k] += other.jumps[k];
            self.jumps_sq[k] += other.jumps_sq[k];
        }
    }
}

fn observables(rho: &Op2) -> [f64; 4] {
    [
        rho[(0, 0)].re,
        (rho * Pauli::X.matrix()).trace().re,
        (rho * Pauli::Y.matrix()).trace().re,
        (rho * Pauli::Z.matrix()).trace().re,
    ]
}

/// Uniform draw on (0, 1].
fn threshold(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn run_one(set: &JumpOperatorSet, psi0: &Ket, t_grid: &[f64], rng: &mut ChaCha8Rng, acc: &mut Accumulator) {
    let mut psi_j = *psi0;
    let mut t_j = 0.0;
    let mut r = threshold(rng);
    let mut counts = [0.0; 2];
    let norm_at = |psi: &Ket, dt: f64| (set.propagator(dt) * psi).norm_squared();
    for (k, &t) in t_grid.iter().enumerate() {
        while norm_at(&psi_j, t - t_j) <= r {
            let (mut lo, mut hi) = (0.0, t - t_j);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if norm_at(&psi_j, mid) > r {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = hi;
            let psi = set.propagator(tau) * psi_j;
            let w_decay = (set.decay * psi).norm_squared();
            let w_deph = (set.dephasing * psi).norm_squared();
            let total = w_decay + w_deph;
            let channel = if total == 0.0 || rng.random::<f64>() * total < w_decay { 0 } else { 1 };
            let op = if channel == 0 { &set.decay } else { &set.dephasing };
            let jumped = op * psi;
            let n = jumped.norm();
            t_j += tau;
            r = threshold(rng);
            if n == 0.0 {
                // The state has no weight in either channel; continue unjumped.
                psi_j = psi / re(psi.norm());
                continue;
            }
            counts[channel] += 1.0;
            psi_j = jumped / re(n);
        }
        let psi = set.propagator(t - t_j) * psi_j;
        let psi = psi / re(psi.norm());
        let rho = psi * psi.adjoint();
        let obs = observables(&rho);
        acc.rho[k] += rho;
        for i in 0..4 {
            acc.sq[k][i] += obs[i] * obs[i];
        }
    }
    for c in 0..2 {
        acc.jumps[c] += counts[c];
        acc.jumps_sq[c] += counts[c] * counts[c];
    }
}

fn std_error(sum: f64, sum_sq: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

/// Monte Carlo wave-function estimate of ρ(t) on the grid.
///
/// Trajectory `i` draws from ChaCha8 seeded with `master_seed` on stream `i`,
/// and trajectories are summed in fixed blocks in index order, so results do
/// not depend on the number of worker threads.
pub fn mc_trajectories(p: &SystemParams, psi0: &Ket, t_grid: &[f64], n_traj: usize, master_seed: u64) -> Result<McTrajectory, DynamicsError> {
    check_grid(t_grid)?;
    if n_traj == 0 {
        return Err(DynamicsError::NoTrajectories);
    }
    let norm_sq = psi0.norm_squared();
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(StateError::NotNormalized { norm_sq }.into());
    }
    let set = JumpOperatorSet::new(p);
    let n_t = t_grid.len();
    let blocks: Vec<Accumulator> = (0..n_traj.div_ceil(MC_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = Accumulator::new(n_t);
            for i in b * MC_BLOCK..((b + 1) * MC_BLOCK).min(n_traj) {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(i as u64);
                run_one(&set, psi0, t_grid, &mut rng, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = Accumulator::new(n_t);
    for b in &blocks {
        total.merge(b);
    }
    let nf = n_traj as f64;
    let mean: Vec<Op2> = total.rho.iter().map(|m| m / re(nf)).collect();
    let std_errors = total
        .rho
        .iter()
        .zip(&total.sq)
        .map(|(sum, sq)| {
            let sums = observables(sum);
            [0, 1, 2, 3].map(|k| std_error(sums[k], sq[k], n_traj))
        })
        .collect();
    Ok(McTrajectory {
        times: t_grid.to_vec(),
        mean,
        std_errors,
        n_traj,
        seed: master_seed,
        mean_jumps: total.jumps.map(|j| j / nf),
        jump_std_errors: [0, 1].map(|c| std_error(total.jumps[c], total.jumps_sq[c], n_traj)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    PopE,
    SigmaX,
    SigmaY,
    SigmaZ,
}

impl Observable {
    pub const ALL: [Observable; 4] = [Observable::PopE, Observable::SigmaX, Observable::SigmaY, Observable::SigmaZ];

    fn index(self) -> usize {
        match self {
            Observable::PopE => 0,
            Observable::SigmaX => 1,
            Observable::SigmaY => 2,
            Observable::SigmaZ => 3,
        }
    }

    pub fn operator(self) -> Op2 {
        match self {
            Observable::PopE => excited_projector(),
            Observable::SigmaX => Pauli::X.matrix(),
            Observable::SigmaY => Pauli::Y.matrix(),
            Observable::SigmaZ => Pauli::Z.matrix(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Present for Monte Carlo trajectories.
    pub std_errors: Option<Vec<f64>>,
}

/// tr(ρ(t)·O) at each grid time.
pub fn observable_series(traj: &Trajectory, obs: Observable) -> Series {
    match traj {
        Trajectory::Master(m) => Series {
            times: m.times.clone(),
            values: m.states.iter().map(|s| observables(s.matrix())[obs.index()]).collect(),
            std_errors: None,
        },
        Trajectory::MonteCarlo(m) => Series {
            times: m.times.clone(),
            values: m.mean.iter().map(|r| observables(r)[obs.index()]).collect(),
            std_errors: Some(m.std_errors.iter().map(|e| e[obs.index()]).collect()),
        },
    }
}

/// Waiting time before a state counts as stationary: ten times the slowest
/// relaxation time 1/min|Im E| over the decaying branches.
pub fn default_settling_time(p: &SystemParams) -> Result<f64, DynamicsError> {
    let e = eigenvalues_closed_form(p)?;
    let slowest = e[..3].iter().map(|z| z.im.abs()).fold(f64::INFINITY, f64::min);
    if slowest <= 1e-12 * p.scale() {
        return Err(DynamicsError::NoRelaxation);
    }
    Ok(10.0 / slowest)
}
