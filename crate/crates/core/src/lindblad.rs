//! Driven two-level system with decay and dephasing.
//!
//! Basis ordering is (|e⟩, |g⟩) for operators and (ρ_ee, ρ_eg, ρ_ge, ρ_gg)
//! for vectorized states. The superoperator is written in the energy
//! convention: d(vec ρ)/dt = −i·L̂·vec ρ, so its eigenvalues E carry the
//! oscillation frequency in Re E and the (negative) dissipation rate in Im E.
//! The usual Lindblad-generator eigenvalue is λ = −iE.

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Op2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;
pub type Ket = Vector2<C64>;

/// Default tolerance on negative density-matrix eigenvalues.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Tolerance for Hermiticity and unit trace when validating states.
pub const STATE_TOL: f64 = 1e-9;

pub(crate) const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("Rabi frequency must be non-negative, got {0}")]
    NegativeOmega(f64),
    #[error("total rate gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
    #[error("mixing fraction alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("a positive Rabi frequency is required to form dimensionless ratios")]
    ZeroOmega,
}

/// A point (Ω, Δ, γ, α) in parameter space.
///
/// Δ = ω_l − ω₀ is the laser detuning; the bare frequencies are never stored.
/// The decay and dephasing rates are γ₀ = αγ and γ_φ = (1 − α)γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    omega: f64,
    delta: f64,
    gamma: f64,
    alpha: f64,
}

impl SystemParams {
    pub fn new(omega: f64, delta: f64, gamma: f64, alpha: f64) -> Result<Self, ParamError> {
        for (name, v) in [("omega", omega), ("delta", delta), ("gamma", gamma), ("alpha", alpha)] {
            if !v.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        if omega < 0.0 {
            return Err(ParamError::NegativeOmega(omega));
        }
        if gamma < 0.0 {
            return Err(ParamError::NegativeGamma(gamma));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ParamError::AlphaOutOfRange(alpha));
        }
        Ok(Self { omega, delta, gamma, alpha })
    }

    /// Ω = 1 units: the scale every locus in this crate is expressed in.
    pub fn dimensionless(delta_over_omega: f64, gamma_over_omega: f64, alpha: f64) -> Result<Self, ParamError> {
        Self::new(1.0, delta_over_omega, gamma_over_omega, alpha)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Decay rate γ₀ = αγ.
    pub fn gamma0(&self) -> f64 {
        self.alpha * self.gamma
    }

    /// Dephasing rate γ_φ = (1 − α)γ, computed as γ − γ₀ so the two sum to γ.
    pub fn gammaphi(&self) -> f64 {
        self.gamma - self.gamma0()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self, ParamError> {
        Self::new(self.omega, self.delta, gamma, self.alpha)
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self, ParamError> {
        Self::new(self.omega, delta, self.gamma, self.alpha)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, ParamError> {
        Self::new(self.omega, self.delta, self.gamma, alpha)
    }

    /// Largest frequency scale of the problem, max(Ω, γ, |Δ|), floored away from zero.
    pub fn scale(&self) -> f64 {
        self.omega.max(self.gamma).max(self.delta.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn require_positive_omega(&self) -> Result<(), ParamError> {
        if self.omega > 0.0 {
            Ok(())
        } else {
            Err(ParamError::ZeroOmega)
        }
    }
}

/// Pauli operators in the (|e⟩, |g⟩) basis; σ_z = |e⟩⟨e| − |g⟩⟨g|.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn matrix(self) -> Op2 {
        let z = C64::new(0.0, 0.0);
        match self {
            Pauli::X => Op2::new(z, re(1.0), re(1.0), z),
            Pauli::Y => Op2::new(z, -I, I, z),
            Pauli::Z => Op2::new(re(1.0), z, z, re(-1.0)),
        }
    }
}

pub fn identity2() -> Op2 {
    Op2::identity()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("trace is {trace:.12}, expected 1")]
    TraceNotOne { trace: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },
    #[error("vector violates ρ_ge = conj(ρ_eg) (deviation {deviation:.3e})")]
    CoherenceNotConjugate { deviation: f64 },
    #[error("populations ρ_ee + ρ_gg are not real (imaginary part {imag:.3e})")]
    ComplexTrace { imag: f64 },
    #[error("state has zero trace and cannot be normalized")]
    ZeroTrace,
    #[error("state vector is not normalized (norm² {norm_sq:.12})")]
    NotNormalized { norm_sq: f64 },
}

/// Hermitian, unit-trace, positive semidefinite 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Op2);

impl DensityMatrix {
    pub fn new(m: Op2) -> Result<Self, StateError> {
        Self::with_tolerance(m, POSITIVITY_TOL)
    }

    pub fn with_tolerance(m: Op2, positivity_tol: f64) -> Result<Self, StateError> {
        let deviation = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if deviation > STATE_TOL {
            return Err(StateError::NotHermitian { deviation });
        }
        let h = hermitian_part(&m);
        let trace = h.trace().re;
        if (trace - 1.0).abs() > STATE_TOL {
            return Err(StateError::TraceNotOne { trace });
        }
        let (lo, _) = hermitian_eigenvalues(&h);
        if lo < -positivity_tol {
            return Err(StateError::NotPositive { min_eigenvalue: lo });
        }
        Ok(Self(h))
    }

    pub(crate) fn from_matrix_unchecked(m: Op2) -> Self {
        Self(m)
    }

    pub fn ground() -> Self {
        Self(Op2::new(re(0.0), re(0.0), re(0.0), re(1.0)))
    }

    pub fn excited() -> Self {
        Self(Op2::new(re(1.0), re(0.0), re(0.0), re(0.0)))
    }

    pub fn maximally_mixed() -> Self {
        Self(Op2::identity() * re(0.5))
    }

    pub fn from_pure(psi: &Ket) -> Result<Self, StateError> {
        let norm_sq = psi.norm_squared();
        if (norm_sq - 1.0).abs() > STATE_TOL {
            return Err(StateError::NotNormalized { norm_sq });
        }
        Ok(Self(hermitian_part(&(psi * psi.adjoint()))))
    }

    /// ρ = ½(𝕀 + x σ_x + y σ_y + z σ_z); requires |r| ≤ 1.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self, StateError> {
        Self::new(bloch_matrix(r))
    }

    pub fn matrix(&self) -> &Op2 {
        &self.0
    }

    pub fn ee(&self) -> f64 {
        self.0[(0, 0)].re
    }

    pub fn eg(&self) -> C64 {
        self.0[(0, 1)]
    }

    pub fn ge(&self) -> C64 {
        self.0[(1, 0)]
    }

    pub fn gg(&self) -> f64 {
        self.0[(1, 1)].re
    }

    /// tr(ρ O).
    pub fn expectation(&self, op: &Op2) -> C64 {
        (self.0 * op).trace()
    }

    /// Bloch vector (⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩).
    pub fn bloch(&self) -> [f64; 3] {
        Pauli::ALL.map(|p| self.expectation(&p.matrix()).re)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.0).0
    }
}

pub(crate) fn bloch_matrix(r: [f64; 3]) -> Op2 {
    let mut m = Op2::identity() * re(0.5);
    for (p, c) in Pauli::ALL.iter().zip(r) {
        m += p.matrix() * re(0.5 * c);
    }
    m
}

pub(crate) fn hermitian_part(m: &Op2) -> Op2 {
    (m + m.adjoint()) * re(0.5)
}

/// Eigenvalues (ascending) of a Hermitian 2×2 matrix.
pub(crate) fn hermitian_eigenvalues(m: &Op2) -> (f64, f64) {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    (mean - radius, mean + radius)
}

/// Nearest unit-trace positive semidefinite matrix: Hermitian part, eigenvalue
/// clipping at zero, trace renormalization.
pub fn project_to_state(m: &Op2) -> Result<DensityMatrix, StateError> {
    let h = hermitian_part(m);
    let trace = h.trace().re;
    if trace.abs() < 1e-300 {
        return Err(StateError::ZeroTrace);
    }
    let h = h / re(trace);
    let (lo, hi) = hermitian_eigenvalues(&h);
    if lo >= 0.0 {
        return Ok(DensityMatrix(h));
    }
    if hi <= 0.0 {
        return Err(StateError::NotPositive { min_eigenvalue: lo });
    }
    // Keep only the eigenvector of the positive eigenvalue.
    let a = h[(0, 0)] - re(lo);
    let b = h[(0, 1)];
    let d = h[(1, 1)] - re(lo);
    // Columns of (h − lo·𝕀) span the eigenvector of `hi`.
    let v = if a.norm() + h[(1, 0)].norm() >= b.norm() + d.norm() {
        Ket::new(a, h[(1, 0)])
    } else {
        Ket::new(b, d)
    };
    let v = v / re(v.norm());
    Ok(DensityMatrix(hermitian_part(&(v * v.adjoint()))))
}

pub fn vectorize(rho: &DensityMatrix) -> Vec4 {
    vectorize_op(rho.matrix())
}

pub fn vectorize_op(m: &Op2) -> Vec4 {
    Vec4::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

pub fn devectorize_op(v: &Vec4) -> Op2 {
    Op2::new(v[0], v[1], v[2], v[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Devectorize {
    /// Reject vectors that are not a physical state.
    Strict,
    /// Project onto the nearest physical state (noisy tomography output).
    Lenient,
}

pub fn devectorize(v: &Vec4, mode: Devectorize) -> Result<DensityMatrix, StateError> {
    let m = devectorize_op(v);
    match mode {
        Devectorize::Strict => {
            let deviation = (v[2] - v[1].conj()).norm();
            if deviation > STATE_TOL {
                return Err(StateError::CoherenceNotConjugate { deviation });
            }
            let imag = (v[0] + v[3]).im;
            if imag.abs() > STATE_TOL {
                return Err(StateError::ComplexTrace { imag });
            }
            DensityMatrix::new(m)
        }
        Devectorize::Lenient => project_to_state(&m),
    }
}

/// H = −Δ|e⟩⟨e| + (Ω/2)(|e⟩⟨g| + |g⟩⟨e|).
pub fn build_hamiltonian(p: &SystemParams) -> Op2 {
    let half = re(0.5 * p.omega());
    Op2::new(re(-p.delta()), half, half, re(0.0))
}

/// |g⟩⟨e|
pub fn lowering() -> Op2 {
    Op2::new(re(0.0), re(0.0), re(1.0), re(0.0))
}

/// |e⟩⟨e|
pub fn excited_projector() -> Op2 {
    Op2::new(re(1.0), re(0.0), re(0.0), re(0.0))
}

/// L_A[ρ] = AρA† − ½{A†A, ρ}
pub fn dissipator(a: &Op2, rho: &Op2) -> Op2 {
    let ad = a.adjoint();
    let ada = ad * a;
    a * rho * ad - (ada * rho + rho * ada) * re(0.5)
}

/// −i[H, ρ] + γ₀ L_{|g⟩⟨e|}[ρ] + γ_φ L_{|e⟩⟨e|}[ρ]
pub fn lindblad_rhs(p: &SystemParams, rho: &Op2) -> Op2 {
    let h = build_hamiltonian(p);
    let coherent = (h * rho - rho * h) * (-I);
    coherent
        + dissipator(&lowering(), rho) * re(p.gamma0())
        + dissipator(&excited_projector(), rho) * re(p.gammaphi())
}

/// 4×4 Liouvillian in the energy convention, acting on (ρ_ee, ρ_eg, ρ_ge, ρ_gg).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Liouvillian4(Mat4);

impl Liouvillian4 {
    pub fn from_matrix(m: Mat4) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    /// The Lindblad generator −i·L̂, i.e. d(vec ρ)/dt = generator · vec ρ.
    pub fn generator(&self) -> Mat4 {
        self.0 * (-I)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    /// d(vec ρ)/dt for the given vectorized state.
    pub fn rate(&self, v: &Vec4) -> Vec4 {
        (self.0 * v) * (-I)
    }
}

pub fn build_liouvillian(p: &SystemParams) -> Liouvillian4 {
    let h = re(0.5 * p.omega());
    let ag = C64::new(0.0, p.alpha() * p.gamma());
    let coh = C64::new(-p.delta(), -0.5 * p.gamma());
    let z = re(0.0);
    #[rustfmt::skip]
    let m = Mat4::new(
        -ag, -h,            h,                     z,
        -h,  coh,           z,                     h,
        h,   z,             C64::new(p.delta(), -0.5 * p.gamma()), -h,
        ag,  h,             -h,                    z,
    );
    Liouvillian4(m)
}

/// L̂(α) split into its pure-dephasing and pure-decay endpoints.
#[derive(Debug, Clone, Copy)]
pub struct AlphaDecomposition {
    /// L̂_φ = L̂(α = 0)
    pub dephasing: Liouvillian4,
    /// L̂₀ = L̂(α = 1)
    pub decay: Liouvillian4,
    /// max |(1−α)L̂_φ + αL̂₀ − L̂(α)| over entries.
    pub reconstruction_error: f64,
}

pub fn decompose_alpha(p: &SystemParams) -> AlphaDecomposition {
    let endpoint = |alpha| {
        let q = p.with_alpha(alpha).expect("endpoint alpha is valid");
        build_liouvillian(&q)
    };
    let dephasing = endpoint(0.0);
    let decay = endpoint(1.0);
    let mixed = dephasing.matrix() * re(1.0 - p.alpha()) + decay.matrix() * re(p.alpha());
    let reconstruction_error = (mixed - build_liouvillian(p).matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    AlphaDecomposition { dephasing, decay, reconstruction_error }
}

/// ‖AB − BA‖_F
pub fn commutator_norm(a: &Liouvillian4, b: &Liouvillian4) -> f64 {
    let (a, b) = (a.matrix(), b.matrix());
    (a * b - b * a).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn close(a: &Op2, b: &Op2, tol: f64) -> bool {
        (a - b).iter().all(|z| z.norm() <= tol)
    }

    #[test]
    fn rejects_bad_params() {
        assert_eq!(SystemParams::new(1.0, 0.0, -1.0, 0.5), Err(ParamError::NegativeGamma(-1.0)));
        assert_eq!(SystemParams::new(1.0, 0.0, 1.0, 1.5), Err(ParamError::AlphaOutOfRange(1.5)));
        assert!(matches!(SystemParams::new(f64::NAN, 0.0, 1.0, 0.5), Err(ParamError::NonFinite("omega"))));
        let p = SystemParams::new(0.0, 0.0, 1.0, 0.5).unwrap();
        assert_eq!(p.require_positive_omega(), Err(ParamError::ZeroOmega));
    }

    #[test]
    fn rates_sum_to_gamma() {
        for &(g, a) in &[(1.0, 0.3), (3.7, 0.1), (1e3, 0.77), (0.0, 0.5), (2.0, 1.0)] {
            let p = SystemParams::new(1.0, 0.0, g, a).unwrap();
            assert_eq!(p.gamma0() + p.gammaphi(), g);
        }
    }

    #[test]
    fn pauli_algebra() {
        let id = identity2();
        for s in Pauli::ALL {
            let m = s.matrix();
            assert!(close(&(m * m), &id, 0.0));
            assert_eq!(m.trace(), re(0.0));
        }
        let xy = Pauli::X.matrix() * Pauli::Y.matrix();
        assert!(close(&xy, &(Pauli::Z.matrix() * I), 0.0));
    }

    #[test]
    fn hamiltonian_examples() {
        let p = SystemParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert!(close(&build_hamiltonian(&p), &Op2::new(re(0.0), re(0.5), re(0.5), re(0.0)), 0.0));
        let p = SystemParams::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert!(close(&build_hamiltonian(&p), &Op2::zeros(), 0.0));
        let d = 1.0 / 8f64.sqrt();
        let p = SystemParams::new(1.0, d, 0.0, 0.0).unwrap();
        let h = build_hamiltonian(&p);
        assert_abs_diff_eq!(h[(0, 0)].re, -0.353_553_390_593_273_8, epsilon = 1e-15);
        assert_eq!(h[(0, 1)], re(0.5));
    }

    #[test]
    fn rhs_ground_state_only_generates_coherence() {
        let p = SystemParams::new(1.0, 0.37, 2.0, 0.6).unwrap();
        let d = lindblad_rhs(&p, DensityMatrix::ground().matrix());
        assert_eq!(d[(0, 0)], re(0.0));
        assert_eq!(d[(1, 1)], re(0.0));
        assert_abs_diff_eq!(d[(0, 1)].im, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)].im, 0.5, epsilon = 1e-15);
        assert_eq!(d[(0, 1)].re, 0.0);
    }

    #[test]
    fn rhs_pure_decay() {
        let p = SystemParams::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let d = lindblad_rhs(&p, DensityMatrix::excited().matrix());
        assert!(close(&d, &Op2::new(re(-1.0), re(0.0), re(0.0), re(1.0)), 0.0));
    }

    #[test]
    fn rhs_pure_dephasing() {
        let p = SystemParams::new(0.0, 0.0, 2.0, 0.0).unwrap();
        let plus = Op2::from_element(re(0.5));
        let d = lindblad_rhs(&p, &plus);
        assert_eq!(d[(0, 0)], re(0.0));
        assert_eq!(d[(1, 1)], re(0.0));
        assert_abs_diff_eq!(d[(0, 1)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)].re, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn liouvillian_coherent_example() {
        let l = build_liouvillian(&SystemParams::new(1.0, 0.0, 0.0, 0.3).unwrap());
        #[rustfmt::skip]
        let want = [
            [0.0, -0.5, 0.5, 0.0],
            [-0.5, 0.0, 0.0, 0.5],
            [0.5, 0.0, 0.0, -0.5],
            [0.0, 0.5, -0.5, 0.0],
        ];
        for (i, row) in want.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                assert_eq!(l.matrix()[(i, j)], re(w));
            }
        }
    }

    #[test]
    fn liouvillian_pure_decay_ep_entries() {
        let l = build_liouvillian(&SystemParams::new(1.0, 0.0, 4.0, 1.0).unwrap());
        let m = l.matrix();
        assert_eq!(m[(0, 0)], C64::new(0.0, -4.0));
        assert_eq!(m[(1, 1)], C64::new(0.0, -2.0));
        assert_eq!(m[(2, 2)], C64::new(0.0, -2.0));
        assert_eq!(m[(3, 0)], C64::new(0.0, 4.0));
    }

    #[test]
    fn trace_row_is_left_null_vector() {
        let l = build_liouvillian(&SystemParams::new(1.3, -0.4, 2.2, 0.35).unwrap());
        let row = nalgebra::RowVector4::new(re(1.0), re(0.0), re(0.0), re(1.0));
        let out = row * l.matrix();
        assert!(out.iter().all(|z| *z == re(0.0)));
    }

    #[test]
    fn alpha_decomposition_endpoints_and_interior() {
        let p0 = SystemParams::new(1.0, 0.2, 2.0, 0.0).unwrap();
        let d0 = decompose_alpha(&p0);
        assert_eq!(d0.dephasing.matrix(), build_liouvillian(&p0).matrix());
        assert_eq!(d0.reconstruction_error, 0.0);
        let p1 = p0.with_alpha(1.0).unwrap();
        let d1 = decompose_alpha(&p1);
        assert_eq!(d1.decay.matrix(), build_liouvillian(&p1).matrix());
        assert_eq!(d1.reconstruction_error, 0.0);
        let d = decompose_alpha(&p0.with_alpha(0.3).unwrap());
        assert!(d.reconstruction_error <= 1e-15);
    }

    #[test]
    fn commutator_examples() {
        let p = SystemParams::new(1.0, 0.0, 1.0, 0.5).unwrap();
        let d = decompose_alpha(&p);
        assert_eq!(commutator_norm(&d.decay, &d.decay), 0.0);
        // Frozen from an independent dense evaluation: ‖[L̂₀, L̂_φ]‖_F = √3 at Ω = γ = 1, Δ = 0.
        assert_abs_diff_eq!(commutator_norm(&d.decay, &d.dephasing), 3f64.sqrt(), epsilon = 1e-14);
        let coherent = decompose_alpha(&p.with_gamma(0.0).unwrap());
        assert_eq!(coherent.decay, coherent.dephasing);
        assert_eq!(commutator_norm(&coherent.decay, &coherent.dephasing), 0.0);
    }

    #[test]
    fn vectorize_examples() {
        let g = vectorize(&DensityMatrix::ground());
        assert_eq!(g, Vec4::new(re(0.0), re(0.0), re(0.0), re(1.0)));
        let m = vectorize(&DensityMatrix::maximally_mixed());
        assert_eq!(m, Vec4::new(re(0.5), re(0.0), re(0.0), re(0.5)));
    }

    #[test]
    fn strict_devectorize_names_violation() {
        let v = Vec4::new(re(0.5), C64::new(0.1, 0.2), C64::new(0.1, 0.2), re(0.5));
        assert!(matches!(devectorize(&v, Devectorize::Strict), Err(StateError::CoherenceNotConjugate { .. })));
        let v = Vec4::new(C64::new(0.5, 0.1), re(0.0), re(0.0), re(0.5));
        assert!(matches!(devectorize(&v, Devectorize::Strict), Err(StateError::ComplexTrace { .. })));
        let v = Vec4::new(re(1.5), re(0.0), re(0.0), re(-0.5));
        assert!(matches!(devectorize(&v, Devectorize::Strict), Err(StateError::NotPositive { .. })));
        let v = Vec4::new(re(0.7), re(0.0), re(0.0), re(0.7));
        assert!(matches!(devectorize(&v, Devectorize::Strict), Err(StateError::TraceNotOne { .. })));
    }

    #[test]
    fn lenient_devectorize_projects() {
        let v = Vec4::new(re(1.2), re(0.1), re(0.1), re(-0.2));
        let rho = devectorize(&v, Devectorize::Lenient).unwrap();
        assert!(rho.min_eigenvalue() >= -1e-15);
        assert_abs_diff_eq!(rho.matrix().trace().re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bloch_round_trip() {
        let rho = DensityMatrix::from_bloch([0.3, -0.2, 0.5]).unwrap();
        let b = rho.bloch();
        assert_abs_diff_eq!(b[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(b[2], 0.5, epsilon = 1e-15);
        assert!(DensityMatrix::from_bloch([1.0, 1.0, 0.0]).is_err());
    }
}
