//! Pulse-based state tomography with binomial shot noise.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::lindblad::{bloch_matrix, project_to_state, re, DensityMatrix, Op2, Pauli, I};

/// U = exp(−i(θ/2)(cos φ·σ_x − sin φ·σ_y)); the laser phase φ multiplies σ₊ = |e⟩⟨g|.
pub fn rotation(theta: f64, phi: f64) -> Op2 {
    let generator = Pauli::X.matrix() * re(phi.cos()) - Pauli::Y.matrix() * re(phi.sin());
    Op2::identity() * re((theta / 2.0).cos()) - generator * (I * (theta / 2.0).sin())
}

/// U ρ U†
pub fn apply_rotation(rho: &DensityMatrix, theta: f64, phi: f64) -> DensityMatrix {
    let u = rotation(theta, phi);
    let m = u * rho.matrix() * u.adjoint();
    DensityMatrix::from_matrix_unchecked((m + m.adjoint()) * re(0.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    /// Pulse (θ, φ) mapping this basis onto the fluorescence measurement, if any.
    pub fn pulse(self) -> Option<(f64, f64)> {
        use std::f64::consts::FRAC_PI_2;
        match self {
            Basis::X => Some((FRAC_PI_2, FRAC_PI_2)),
            Basis::Y => Some((FRAC_PI_2, 0.0)),
            Basis::Z => None,
        }
    }
}

/// Exact probability of finding |e⟩ after the basis pulse.
pub fn bright_probability(rho: &DensityMatrix, basis: Basis) -> f64 {
    let rotated = match basis.pulse() {
        Some((theta, phi)) => apply_rotation(rho, theta, phi),
        None => rho.clone(),
    };
    rotated.ee().clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    Finite(u64),
    /// Infinite-shot limit: exact probabilities with zero error.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeEstimate {
    pub p: f64,
    /// √(p̂(1 − p̂)/n)
    pub std_error: f64,
    pub shots: Option<u64>,
}

pub fn simulate_measurement<R: Rng + ?Sized>(rho: &DensityMatrix, basis: Basis, shots: Shots, rng: &mut R) -> PeEstimate {
    let p = bright_probability(rho, basis);
    match shots {
        Shots::Analytic => PeEstimate { p, std_error: 0.0, shots: None },
        Shots::Finite(n) => {
            let n = n.max(1);
            let k = Binomial::new(n, p).expect("probability clamped to [0, 1]").sample(rng);
            let p_hat = k as f64 / n as f64;
            PeEstimate { p: p_hat, std_error: (p_hat * (1.0 - p_hat) / n as f64).sqrt(), shots: Some(n) }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// ½𝕀 + Σ(P_i − ½)σ_i, possibly with a negative eigenvalue.
    pub raw: Op2,
    /// Nearest physical state (equal to `raw` when it is already positive).
    pub projected: DensityMatrix,
    pub raw_is_physical: bool,
}

/// ρ = ½𝕀 + Σ_{i=x,y,z}(P_i − ½)σ_i
pub fn reconstruct_state(px: f64, py: f64, pz: f64) -> Reconstruction {
    let raw = bloch_matrix([2.0 * px - 1.0, 2.0 * py - 1.0, 2.0 * pz - 1.0]);
    match DensityMatrix::new(raw) {
        Ok(state) => Reconstruction { raw, projected: state, raw_is_physical: true },
        Err(_) => {
            let projected = project_to_state(&raw).expect("unit-trace Hermitian input has a positive eigenvalue");
            Reconstruction { raw, projected, raw_is_physical: false }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyResult {
    /// P_e after the x, y and z pulses.
    pub estimates: [PeEstimate; 3],
    pub reconstruction: Reconstruction,
    /// Standard errors of ρ_ee, Re ρ_eg and Im ρ_eg.
    pub element_std_errors: [f64; 3],
}

impl TomographyResult {
    /// Bloch components 2P_i − 1 with their standard errors.
    pub fn bloch(&self) -> [(f64, f64); 3] {
        self.estimates.map(|e| (2.0 * e.p - 1.0, 2.0 * e.std_error))
    }
}

pub fn tomography<R: Rng + ?Sized>(rho: &DensityMatrix, shots: Shots, rng: &mut R) -> TomographyResult {
    let estimates = Basis::ALL.map(|b| simulate_measurement(rho, b, shots, rng));
    let reconstruction = reconstruct_state(estimates[0].p, estimates[1].p, estimates[2].p);
    TomographyResult {
        estimates,
        reconstruction,
        element_std_errors: [estimates[2].std_error, estimates[0].std_error, estimates[1].std_error],
    }
}
