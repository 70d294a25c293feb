//! Spectrum of the Liouvillian: the guaranteed zero eigenvalue plus the three
//! roots of a cubic, obtained both in closed form and from a general
//! eigensolver, along with the steady state and branch labelling along sweeps.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::lindblad::{
    build_liouvillian, devectorize_op, re, DensityMatrix, Liouvillian4, Mat4, StateError, SystemParams, Vec4, C64,
};
use crate::linalg::{eigenvalues_qr, singular_values, svd_desc, QrError};

/// Relative bound on the quartic's constant term, in units of ‖L̂‖⁴.
pub const QUARTIC_CONSTANT_TOL: f64 = 1e-10;
/// Relative singular-value threshold for the steady-state null space.
pub const NULL_SPACE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("characteristic quartic has constant term {constant:.3e} (bound {bound:.3e}); the Liouvillian builder is inconsistent")]
    InconsistentQuartic { constant: f64, bound: f64 },
    #[error("eigensolver failed: {source}; matrix {matrix:?}")]
    Eigen { source: QrError, matrix: Box<Mat4> },
    #[error("eigenpair residuals {residuals:?} exceed {bound:.3e}")]
    Residual { residuals: Vec<f64>, bound: f64 },
    #[error("steady state is not unique: null space has dimension {nullity}")]
    DegenerateSteadyState { nullity: usize },
    #[error("steady-state vector is not a physical state: {0}")]
    State(#[from] StateError),
}

/// Coefficients of C(E) = E³ + c₂E² + c₁E + c₀ where det(E𝕀 − L̂) = E·C(E).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCoefficients {
    pub c2: C64,
    pub c1: C64,
    pub c0: C64,
    /// Constant term of the quartic; zero up to rounding.
    pub quartic_constant: C64,
}

impl CubicCoefficients {
    pub fn eval(&self, e: C64) -> C64 {
        ((e + self.c2) * e + self.c1) * e + self.c0
    }

    pub fn derivative(&self, e: C64) -> C64 {
        (e * 3.0 + self.c2 * 2.0) * e + self.c1
    }

    pub fn second_derivative(&self, e: C64) -> C64 {
        e * 6.0 + self.c2 * 2.0
    }

    /// Mean of the three roots, −c₂/3.
    pub fn centroid(&self) -> C64 {
        -self.c2 / 3.0
    }

    /// (p, q) of the depressed cubic t³ + pt + q with E = t − c₂/3.
    pub fn depressed(&self) -> (C64, C64) {
        let (a, b, c) = (self.c2, self.c1, self.c0);
        let p = b - a * a / 3.0;
        let q = a * a * a * (2.0 / 27.0) - a * b / 3.0 + c;
        (p, q)
    }

    /// Π_{i<j}(E_i − E_j)² = −4p³ − 27q².
    pub fn discriminant(&self) -> C64 {
        let (p, q) = self.depressed();
        -(p * p * p) * 4.0 - q * q * 27.0
    }

    /// The three roots by Cardano's formula with a guarded Newton polish.
    pub fn roots(&self) -> [C64; 3] {
        let (p, q) = self.depressed();
        let shift = self.centroid();
        let half_q = q * 0.5;
        let s = (half_q * half_q + p * p * p / 27.0).sqrt();
        let u3 = if (-half_q + s).norm() >= (-half_q - s).norm() { -half_q + s } else { -half_q - s };
        let omega = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        let mut roots = if u3.norm() == 0.0 {
            [shift; 3]
        } else {
            let u = u3.powf(1.0 / 3.0);
            let mut r = [shift; 3];
            let mut uk = u;
            for root in r.iter_mut() {
                *root = uk - p / (uk * 3.0) + shift;
                uk *= omega;
            }
            r
        };
        for root in roots.iter_mut() {
            for _ in 0..3 {
                let f = self.eval(*root);
                let df = self.derivative(*root);
                if df.norm() == 0.0 || f.norm() == 0.0 {
                    break;
                }
                let next = *root - f / df;
                if self.eval(next).norm() < f.norm() {
                    *root = next;
                } else {
                    break;
                }
            }
        }
        roots
    }
}

/// Coefficients [1, a₃, a₂, a₁, a₀] of det(λ𝕀 − M) by the Faddeev–LeVerrier recursion.
pub fn faddeev_leverrier(m: &Mat4) -> [C64; 5] {
    let n = 4;
    let mut coeffs = [re(0.0); 5];
    coeffs[0] = re(1.0);
    let mut mk = Mat4::zeros();
    for k in 1..=n {
        mk = m * mk + Mat4::identity() * coeffs[k - 1];
        coeffs[k] = -(m * mk).trace() / (k as f64);
    }
    coeffs
}

pub fn characteristic_cubic(p: &SystemParams) -> Result<CubicCoefficients, SpectralError> {
    cubic_of(&build_liouvillian(p))
}

pub(crate) fn cubic_of(l: &Liouvillian4) -> Result<CubicCoefficients, SpectralError> {
    let [_, a3, a2, a1, a0] = faddeev_leverrier(l.matrix());
    let norm = l.frobenius_norm();
    let bound = QUARTIC_CONSTANT_TOL * norm.powi(4);
    if a0.norm() > bound && a0.norm() > f64::MIN_POSITIVE {
        return Err(SpectralError::InconsistentQuartic { constant: a0.norm(), bound });
    }
    Ok(CubicCoefficients { c2: a3, c1: a2, c0: a1, quartic_constant: a0 })
}

/// Orders eigenvalues by real part, then imaginary part, treating real parts
/// within `tol` as equal.
pub fn exact_phase_order(a: &C64, b: &C64, tol: f64) -> std::cmp::Ordering {
    if (a.re - b.re).abs() > tol {
        a.re.total_cmp(&b.re)
    } else {
        a.im.total_cmp(&b.im)
    }
}

fn tie_tol(values: &[C64]) -> f64 {
    1e-12 * values.iter().map(|z| z.norm()).fold(1.0, f64::max)
}

/// [E₁, E₂, E₃, E₄ = 0]: the cubic roots in exact-phase order and the zero branch.
pub fn eigenvalues_closed_form(p: &SystemParams) -> Result<[C64; 4], SpectralError> {
    let mut roots = characteristic_cubic(p)?.roots();
    let tol = tie_tol(&roots);
    roots.sort_by(|a, b| exact_phase_order(a, b, tol));
    Ok([roots[0], roots[1], roots[2], re(0.0)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: C64,
    /// Unit norm; largest-magnitude component real and positive.
    pub vector: Vec4,
    /// ‖Lv − Ev‖
    pub residual: f64,
    /// Two smallest singular values of (L − E𝕀), smallest first.
    pub smallest_singular_values: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceDiagnostics {
    pub min_gap: f64,
    pub min_gap_pair: (usize, usize),
    /// |⟨v_i|v_j⟩| for all pairs.
    pub overlaps: [[f64; 4]; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by real part, then imaginary part.
    pub pairs: Vec<EigenPair>,
    /// Index of the eigenvalue closest to zero (the trace-preserving branch).
    pub zero_index: usize,
    pub diagnostics: CoalescenceDiagnostics,
}

impl Spectrum {
    pub fn values(&self) -> [C64; 4] {
        [0, 1, 2, 3].map(|i| self.pairs[i].value)
    }

    /// The three eigenvalues other than the zero branch, in stored order.
    pub fn nonzero_values(&self) -> [C64; 3] {
        let v: Vec<C64> = (0..4).filter(|&i| i != self.zero_index).map(|i| self.pairs[i].value).collect();
        [v[0], v[1], v[2]]
    }

    /// Estimated geometric multiplicity of `pairs[i]`: the number of singular
    /// values of (L − E𝕀) below `threshold`.
    pub fn geometric_multiplicity(&self, i: usize, threshold: f64) -> usize {
        self.pairs[i].smallest_singular_values.iter().filter(|&&s| s <= threshold).count()
    }
}

/// Unit vector with its largest-magnitude component made real and positive.
pub(crate) fn fix_phase(v: &Vec4) -> Vec4 {
    let v = v / re(v.norm());
    let big = v.iter().cloned().fold(re(0.0), |acc, z| if z.norm() > acc.norm() { z } else { acc });
    if big.norm() == 0.0 {
        return v;
    }
    v * (big.conj() / big.norm())
}

/// All eigenpairs of a 4×4 complex matrix.
///
/// Eigenvalues come from shifted QR iteration; each eigenvector is the
/// smallest right singular vector of (L − E𝕀), which stays well defined as
/// the eigenvalue becomes defective.
pub fn eigen_full(l: &Mat4) -> Result<Spectrum, SpectralError> {
    let dm = DMatrix::from_iterator(4, 4, l.iter().cloned());
    let mut values = eigenvalues_qr(&dm).map_err(|source| SpectralError::Eigen { source, matrix: Box::new(*l) })?;
    let tol = tie_tol(&values);
    values.sort_by(|a, b| exact_phase_order(a, b, tol));

    let norm = l.norm();
    let mut pairs = Vec::with_capacity(4);
    for &value in &values {
        let shifted = l - Mat4::identity() * value;
        let (s, v) = svd_desc(&shifted);
        let vector = fix_phase(&Vec4::new(v[(0, 3)], v[(1, 3)], v[(2, 3)], v[(3, 3)]));
        let residual = (l * vector - vector * value).norm();
        pairs.push(EigenPair { value, vector, residual, smallest_singular_values: [s[3], s[2]] });
    }
    let bound = 1e-9 * norm.max(f64::MIN_POSITIVE);
    let residuals: Vec<f64> = pairs.iter().map(|p| p.residual).collect();
    if residuals.iter().any(|&r| r > bound) {
        return Err(SpectralError::Residual { residuals, bound });
    }

    let zero_index = (0..4).min_by(|&a, &b| values[a].norm().total_cmp(&values[b].norm())).unwrap();
    let mut overlaps = [[0.0; 4]; 4];
    let mut min_gap = f64::INFINITY;
    let mut min_gap_pair = (0, 1);
    for i in 0..4 {
        for j in 0..4 {
            overlaps[i][j] = pairs[i].vector.dotc(&pairs[j].vector).norm();
            if i < j {
                let gap = (values[i] - values[j]).norm();
                if gap < min_gap {
                    min_gap = gap;
                    min_gap_pair = (i, j);
                }
            }
        }
    }
    Ok(Spectrum { pairs, zero_index, diagnostics: CoalescenceDiagnostics { min_gap, min_gap_pair, overlaps } })
}

/// Unique stationary state: the normalized null vector of L̂.
pub fn steady_state(p: &SystemParams) -> Result<DensityMatrix, SpectralError> {
    let l = build_liouvillian(p);
    let (s, v) = svd_desc(l.matrix());
    let threshold = NULL_SPACE_TOL * l.frobenius_norm().max(f64::MIN_POSITIVE);
    let nullity = s.iter().filter(|&&x| x <= threshold).count();
    if nullity > 1 {
        return Err(SpectralError::DegenerateSteadyState { nullity });
    }
    let null = Vec4::new(v[(0, 3)], v[(1, 3)], v[(2, 3)], v[(3, 3)]);
    let trace = null[0] + null[3];
    let m = devectorize_op(&(null / trace));
    Ok(DensityMatrix::new(m)?)
}

/// Singular values of L̂ − E𝕀, descending.
pub fn shifted_singular_values(l: &Liouvillian4, e: C64) -> Vec<f64> {
    singular_values(&(l.matrix() - Mat4::identity() * e))
}

/// Eigenvalue curves with persistent labels E₁, E₂, E₃.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchTracking {
    pub labeled: Vec<[C64; 3]>,
    /// Sweep indices whose matching had more than one optimal assignment.
    pub ambiguous_steps: Vec<usize>,
}

/// Labelled eigenvalue sets where some sets may be incomplete.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTracking {
    pub labeled: Vec<[Option<C64>; 3]>,
    pub ambiguous_steps: Vec<usize>,
}

/// Label sweep spectra continuously: E₁ < E₂ < E₃ by real part at the first
/// point, then the minimum-total-distance assignment at each step.
pub fn track_branches(sweep: &[SystemParams]) -> Result<BranchTracking, SpectralError> {
    let sets = sweep
        .iter()
        .map(|p| characteristic_cubic(p).map(|c| c.roots().to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    let tracked = track_eigenvalue_sets(&sets);
    let labeled = tracked.labeled.iter().map(|row| row.map(|z| z.expect("full sets fill every label"))).collect();
    Ok(BranchTracking { labeled, ambiguous_steps: tracked.ambiguous_steps })
}

/// Sort key for resolving ties: more damped first, then by real part.
fn damping_order(a: &C64, b: &C64, tol: f64) -> std::cmp::Ordering {
    if (a.im - b.im).abs() > tol {
        a.im.total_cmp(&b.im)
    } else {
        a.re.total_cmp(&b.re)
    }
}

/// Initial labels: a mirror pair (E, −Ē) with nonzero real part takes
/// labels 1 and 3 and a purely imaginary value takes label 2; otherwise values
/// are sorted by real part, falling back to damping order when all real parts
/// coincide.
fn initial_labels(values: &[C64]) -> [Option<C64>; 3] {
    let tol = 1e-9 * values.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut out = [None; 3];
    let mut sorted: Vec<C64> = values.to_vec();
    let all_imaginary = sorted.iter().all(|z| z.re.abs() <= tol);
    if all_imaginary {
        sorted.sort_by(|a, b| damping_order(a, b, tol));
        for (slot, v) in out.iter_mut().zip(sorted) {
            *slot = Some(v);
        }
        return out;
    }
    sorted.sort_by(|a, b| exact_phase_order(a, b, tol));
    match sorted.len() {
        3 => {
            for (slot, v) in out.iter_mut().zip(sorted) {
                *slot = Some(v);
            }
        }
        2 if sorted[0].re < -tol && sorted[1].re > tol => {
            out[0] = Some(sorted[0]);
            out[2] = Some(sorted[1]);
        }
        _ => {
            for v in sorted {
                if v.re.abs() <= tol && out[1].is_none() {
                    out[1] = Some(v);
                } else if v.re < 0.0 && out[0].is_none() {
                    out[0] = Some(v);
                } else if let Some(slot) = out.iter_mut().find(|s| s.is_none()) {
                    *slot = Some(v);
                }
            }
        }
    }
    out
}

/// All injective maps from `k` values into the three labels.
fn assignments(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fn rec(k: usize, used: &mut [bool; 3], current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for label in 0..3 {
            if !used[label] {
                used[label] = true;
                current.push(label);
                rec(k, used, current, out);
                current.pop();
                used[label] = false;
            }
        }
    }
    rec(k.min(3), &mut [false; 3], &mut current, &mut out);
    out
}

/// Continuity labelling for sets of at most three eigenvalues.
///
/// Ties between optimal assignments (which occur exactly when a sweep step
/// straddles a coalescence, by the E ↔ −Ē mirror symmetry) are flagged and
/// resolved by ordering labels from most to least damped.
pub fn track_eigenvalue_sets(sets: &[Vec<C64>]) -> PartialTracking {
    let mut labeled: Vec<[Option<C64>; 3]> = Vec::with_capacity(sets.len());
    let mut ambiguous_steps = Vec::new();
    let mut last: [Option<C64>; 3] = [None; 3];
    for (step, set) in sets.iter().enumerate() {
        let values: Vec<C64> = set.iter().take(3).cloned().collect();
        if last.iter().all(|z| z.is_none()) {
            let row = initial_labels(&values);
            for (l, r) in last.iter_mut().zip(row) {
                if r.is_some() {
                    *l = r;
                }
            }
            labeled.push(row);
            continue;
        }
        let candidates = assignments(values.len());
        let costs: Vec<f64> = candidates
            .iter()
            .map(|a| a.iter().zip(&values).map(|(&label, v)| last[label].map_or(0.0, |prev| (v - prev).norm())).sum())
            .collect();
        let best = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut scale_values = values.clone();
        scale_values.extend(last.iter().flatten());
        let tol = tie_tol(&scale_values);
        let tied: Vec<usize> = (0..candidates.len()).filter(|&i| costs[i] <= best + tol).collect();
        let chosen = if tied.len() > 1 {
            ambiguous_steps.push(step);
            let order_tol = 1e-9 * scale_values.iter().map(|z| z.norm()).fold(1.0, f64::max);
            *tied
                .iter()
                .min_by_key(|&&i| {
                    let a = &candidates[i];
                    let mut inversions = 0usize;
                    for x in 0..a.len() {
                        for y in 0..a.len() {
                            if a[x] < a[y] && damping_order(&values[x], &values[y], order_tol) == std::cmp::Ordering::Greater {
                                inversions += 1;
                            }
                        }
                    }
                    inversions
                })
                .unwrap()
        } else {
            tied[0]
        };
        let mut row = [None; 3];
        for (&label, v) in candidates[chosen].iter().zip(&values) {
            row[label] = Some(*v);
            last[label] = Some(*v);
        }
        labeled.push(row);
    }
    PartialTracking { labeled, ambiguous_steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(omega: f64, delta: f64, gamma: f64, alpha: f64) -> SystemParams {
        SystemParams::new(omega, delta, gamma, alpha).unwrap()
    }

    fn assert_set_eq(got: &[C64], want: &[C64], tol: f64) {
        let mut used = vec![false; want.len()];
        for g in got {
            let (idx, d) = want
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, w)| (i, (g - w).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d <= tol, "{g} not within {tol} of {want:?}");
            used[idx] = true;
        }
    }

    #[test]
    fn cubic_at_balanced_alpha() {
        let p = params(1.0, 0.7, 3.0, 0.5);
        let roots = characteristic_cubic(&p).unwrap().roots();
        let s = (0.49f64 + 1.0).sqrt();
        let want = [C64::new(-s, -1.5), C64::new(0.0, -1.5), C64::new(s, -1.5)];
        assert_set_eq(&roots, &want, 1e-12);
    }

    #[test]
    fn cubic_trace_identity() {
        let p = params(1.0, 0.3, 2.5, 0.2);
        let c = characteristic_cubic(&p).unwrap();
        assert_abs_diff_eq!((-c.c2 - C64::new(0.0, -2.5 * 1.2)).norm(), 0.0, epsilon = 1e-14);
        let r = c.roots();
        assert_abs_diff_eq!((-(r[0] * r[1] * r[2]) - c.c0).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cubic_closed_system() {
        let roots = characteristic_cubic(&params(1.0, 0.0, 0.0, 0.0)).unwrap().roots();
        assert_set_eq(&roots, &[re(0.0), re(1.0), re(-1.0)], 1e-14);
    }

    #[test]
    fn cubic_pure_decay_ep2_double_root() {
        // Frozen from the eigensolver on the explicit matrix: {−2i, −3i, −3i}.
        let roots = characteristic_cubic(&params(1.0, 0.0, 4.0, 1.0)).unwrap().roots();
        assert_set_eq(&roots, &[C64::new(0.0, -2.0), C64::new(0.0, -3.0), C64::new(0.0, -3.0)], 1e-7);
        let dense = eigen_full(build_liouvillian(&params(1.0, 0.0, 4.0, 1.0)).matrix()).unwrap();
        assert_set_eq(&dense.nonzero_values(), &roots, 1e-7);
    }

    #[test]
    fn inconsistent_quartic_is_reported() {
        let mut m = *build_liouvillian(&params(1.0, 0.2, 1.0, 0.4)).matrix();
        m[(0, 0)] += C64::new(0.3, 0.0);
        let err = cubic_of(&Liouvillian4::from_matrix(m)).unwrap_err();
        assert!(matches!(err, SpectralError::InconsistentQuartic { .. }));
    }

    #[test]
    fn closed_form_examples() {
        let e = eigenvalues_closed_form(&params(1.0, 0.3, 2.0, 0.5)).unwrap();
        let s = 1.09f64.sqrt();
        assert_abs_diff_eq!(s, 1.044_030_650_891_055, epsilon = 1e-15);
        assert!((e[0] - C64::new(-s, -1.0)).norm() < 1e-12);
        assert!((e[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((e[2] - C64::new(s, -1.0)).norm() < 1e-12);
        assert_eq!(e[3], re(0.0));

        let e = eigenvalues_closed_form(&params(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert!((e[0] + 1.0).norm() < 1e-14 && e[1].norm() < 1e-14 && (e[2] - 1.0).norm() < 1e-14);

        // Triple root: forced to tr L̂ / 3 = −iγ(1+α)/3.
        let g = 13.5f64.sqrt();
        let e = eigenvalues_closed_form(&params(1.0, 1.0 / 8f64.sqrt(), g, 0.0)).unwrap();
        let star = C64::new(0.0, -g / 3.0);
        assert_abs_diff_eq!(star.im, -1.224_744_871_391_589, epsilon = 1e-15);
        for z in &e[..3] {
            assert!((z - star).norm() < 1e-4, "{z}");
        }
    }

    #[test]
    fn eigen_full_diagonal() {
        let mut m = Mat4::zeros();
        m[(0, 0)] = re(1.0);
        m[(1, 1)] = C64::new(0.0, 2.0);
        m[(2, 2)] = re(-3.0);
        let s = eigen_full(&m).unwrap();
        let want = [re(-3.0), re(0.0), C64::new(0.0, 2.0), re(1.0)];
        let basis = [2, 3, 1, 0];
        for (k, pair) in s.pairs.iter().enumerate() {
            assert_eq!(pair.value, want[k]);
            assert!((pair.vector[basis[k]] - re(1.0)).norm() < 1e-14);
        }
        assert_eq!(s.zero_index, 1);
    }

    #[test]
    fn eigen_full_jordan_block_multiplicity() {
        let mut m = Mat4::zeros();
        m[(0, 1)] = re(1.0);
        m[(2, 2)] = re(1.0);
        m[(3, 3)] = re(2.0);
        let s = eigen_full(&m).unwrap();
        let zeros: Vec<usize> = (0..4).filter(|&i| s.pairs[i].value.norm() < 1e-8).collect();
        assert_eq!(zeros.len(), 2);
        for &i in &zeros {
            assert_eq!(s.geometric_multiplicity(i, 1e-6), 1);
        }
        assert!(s.diagnostics.overlaps[zeros[0]][zeros[1]] > 1.0 - 1e-12);
    }

    #[test]
    fn eigen_full_matches_closed_form() {
        let p = params(1.0, 0.0, 1.0, 0.0);
        let dense = eigen_full(build_liouvillian(&p).matrix()).unwrap();
        let closed = eigenvalues_closed_form(&p).unwrap();
        assert_set_eq(&dense.values(), &closed, 1e-10);
    }

    #[test]
    fn eigenvectors_are_normalized_with_fixed_phase() {
        let dense = eigen_full(build_liouvillian(&params(1.0, 0.4, 1.3, 0.7)).matrix()).unwrap();
        for pair in &dense.pairs {
            assert_abs_diff_eq!(pair.vector.norm(), 1.0, epsilon = 1e-14);
            let big = pair.vector.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(big.im.abs() < 1e-14 && big.re > 0.0);
        }
    }

    #[test]
    fn steady_state_pure_decay() {
        let rho = steady_state(&params(0.0, 0.0, 1.0, 1.0)).unwrap();
        assert!((rho.gg() - 1.0).abs() < 1e-14 && rho.eg().norm() < 1e-14);
    }

    #[test]
    fn steady_state_pure_dephasing_is_degenerate() {
        let err = steady_state(&params(0.0, 0.0, 1.0, 0.0)).unwrap_err();
        assert_eq!(err, SpectralError::DegenerateSteadyState { nullity: 2 });
        let err = steady_state(&params(1.0, 0.3, 0.0, 0.4)).unwrap_err();
        assert!(matches!(err, SpectralError::DegenerateSteadyState { .. }));
    }

    #[test]
    fn steady_state_driven_decay() {
        let rho = steady_state(&params(1.0, 0.0, 1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(rho.ee(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn tracking_constant_sweep_keeps_labels() {
        let p = params(1.0, 0.2, 1.0, 0.3);
        let t = track_branches(&vec![p; 5]).unwrap();
        assert!(t.ambiguous_steps.is_empty());
        for row in &t.labeled {
            assert_eq!(row, &t.labeled[0]);
        }
    }

    #[test]
    fn tracking_exact_phase_sweep() {
        let sweep: Vec<_> = (0..=60).map(|k| params(1.0, 0.0, 0.05 * k as f64, 0.0)).collect();
        let t = track_branches(&sweep).unwrap();
        assert!(t.ambiguous_steps.is_empty());
        for row in &t.labeled {
            assert!((row[0].re + row[2].re).abs() < 1e-10);
            assert!(row[1].re.abs() < 1e-10);
            assert!(row[0].re < 0.0 && row[2].re > 0.0);
        }
    }

    #[test]
    fn tracking_through_ep2_flags_and_merges_real_parts() {
        let sweep: Vec<_> = (0..=80).map(|k| params(1.0, 0.0, 0.1 * k as f64 + 0.05, 0.0)).collect();
        let t = track_branches(&sweep).unwrap();
        assert_eq!(t.ambiguous_steps.len(), 1);
        let step = t.ambiguous_steps[0];
        assert!(sweep[step - 1].gamma() < 4.0 && sweep[step].gamma() > 4.0);
        for (p, row) in sweep.iter().zip(&t.labeled) {
            if p.gamma() > 4.0 {
                assert!(row[0].re.abs() < 1e-9 && row[2].re.abs() < 1e-9);
                assert!((row[0].im - row[2].im).abs() > 1e-6);
                assert!((row[1].im + 0.5 * p.gamma()).abs() < 1e-9);
            } else {
                assert!((row[0].im - row[2].im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn partial_sets_use_mirror_labels() {
        let sets = vec![vec![C64::new(0.9, -0.5), C64::new(-0.9, -0.5)]];
        let t = track_eigenvalue_sets(&sets);
        assert_eq!(t.labeled[0][0], Some(C64::new(-0.9, -0.5)));
        assert_eq!(t.labeled[0][1], None);
        assert_eq!(t.labeled[0][2], Some(C64::new(0.9, -0.5)));
    }
}
