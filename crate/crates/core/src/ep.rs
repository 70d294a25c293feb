//! Exceptional points: classification of eigenvalue coalescences by order,
//! root-finding for second- and third-order points, exceptional-line tracing
//! over the (Δ, γ) plane, and loci as functions of α.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::lindblad::{build_liouvillian, Mat4, ParamError, SystemParams, C64};
use crate::linalg::singular_values;
use crate::spectral::{characteristic_cubic, eigen_full, SpectralError, Spectrum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpError {
    #[error("at alpha = 0.5 the decay and dephasing contributions cancel and the exceptional points move to infinite gamma")]
    DivergentLocus { alpha: f64 },
    #[error("alpha = {alpha} lies inside the exclusion band |alpha - 0.5| < {band}")]
    Excluded { alpha: f64, band: f64 },
    #[error("no sign change of the discriminant on gamma in [{lo}, {hi}] (values {f_lo:.3e}, {f_hi:.3e})")]
    NoRootInBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("root search did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("located point does not classify as an order-{expected} exceptional point: {found:?}")]
    NotConfirmed { expected: u8, found: Box<Classification> },
    #[error("phase language is defined on the delta = 0 slice only (got delta = {delta}); use classify_ep instead")]
    NonZeroDetuning { delta: f64 },
    #[error("formula phase {formula:?} disagrees with spectrum phase {spectrum:?}")]
    PhaseMismatch { formula: Phase, spectrum: Phase },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Classification thresholds. Gap tolerances are relative to
/// max(Ω, γ, |Δ|); the rank threshold is relative to the Frobenius norm of
/// each matrix power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpTolerances {
    pub gap_tol: f64,
    /// Triple coalescence smears as the cube root of rounding error, so it
    /// needs a looser gap threshold than pairs.
    pub gap3_tol: f64,
    pub overlap_tol: f64,
    pub sv_sep_tol: f64,
    pub rank_tol: f64,
}

impl Default for EpTolerances {
    fn default() -> Self {
        Self { gap_tol: 1e-6, gap3_tol: 1e-4, overlap_tol: 1e-4, sv_sep_tol: 1e-3, rank_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpOrder {
    Two,
    Three,
}

impl EpOrder {
    pub fn as_u8(self) -> u8 {
        match self {
            EpOrder::Two => 2,
            EpOrder::Three => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpDiagnostics {
    /// |disc| / max(Ω, γ, |Δ|)⁶
    pub discriminant: f64,
    /// Smallest pairwise gap among the three nonzero-branch eigenvalues.
    pub min_gap: f64,
    /// Largest pairwise gap among them.
    pub max_gap: f64,
    /// Two smallest singular values of (L̂ − E*𝕀), smallest first.
    pub smallest_singular_values: [f64; 2],
    pub geometric_multiplicity: usize,
    /// Largest |⟨v_i|v_j⟩| among the coalescing eigenvectors.
    pub max_overlap: f64,
    /// Numerical ranks of (L̂ − E*𝕀)^k for k = 1, 2, 3.
    pub ranks: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpCandidate {
    pub params: SystemParams,
    pub order: EpOrder,
    pub e_star: C64,
    pub diagnostics: EpDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Classification {
    None(EpDiagnostics),
    /// A gap fell inside the no-decision band [tol, 10·tol].
    Indeterminate { order: EpOrder, gap: f64, band: (f64, f64), diagnostics: EpDiagnostics },
    Ep(EpCandidate),
}

impl Classification {
    pub fn candidate(&self) -> Option<&EpCandidate> {
        match self {
            Classification::Ep(c) => Some(c),
            _ => None,
        }
    }

    pub fn order(&self) -> Option<EpOrder> {
        self.candidate().map(|c| c.order)
    }
}

/// Discriminant Π_{i<j}(E_i − E_j)² of the characteristic cubic.
pub fn cubic_discriminant(p: &SystemParams) -> Result<C64, SpectralError> {
    Ok(characteristic_cubic(p)?.discriminant())
}

/// Real-valued discriminant surrogate normalized by max(Ω, γ, |Δ|)⁶.
///
/// In the variable λ = −iE the cubic has real coefficients, so the
/// discriminant in E is real: positive when the spectrum holds a mirror pair
/// (E, −Ē) plus one purely imaginary value, negative when all three values are
/// purely imaginary and distinct, and zero on coalescence.
pub fn signed_discriminant(p: &SystemParams) -> Result<f64, SpectralError> {
    Ok(cubic_discriminant(p)?.re / p.scale().powi(6))
}

fn power_ranks(a: &Mat4, rank_tol: f64) -> ([usize; 3], Vec<f64>) {
    let mut ranks = [0; 3];
    let mut power = *a;
    let mut first = Vec::new();
    for (k, rank) in ranks.iter_mut().enumerate() {
        let sv = singular_values(&power);
        let threshold = rank_tol * power.norm();
        *rank = sv.iter().filter(|&&s| s > threshold).count();
        if k == 0 {
            first = sv;
        }
        power *= a;
    }
    (ranks, first)
}

/// Classifies the coalescence at `p` using the general eigensolver.
///
/// Order 3 needs all three nonzero-branch eigenvalues within `gap3_tol`,
/// geometric multiplicity one and ranks 3, 2, 1 for (L̂ − E*𝕀)^{1,2,3} (a
/// single Jordan chain of length three). Order 2 needs a pair within `gap_tol`
/// with eigenvector overlap ≥ 1 − `overlap_tol` and geometric multiplicity one.
pub fn classify_ep(p: &SystemParams, tols: &EpTolerances) -> Result<Classification, SpectralError> {
    let l = build_liouvillian(p);
    let spectrum = eigen_full(l.matrix())?;
    classify_spectrum(p, &spectrum, l.matrix(), tols)
}

fn classify_spectrum(p: &SystemParams, spectrum: &Spectrum, l: &Mat4, tols: &EpTolerances) -> Result<Classification, SpectralError> {
    let s = p.scale();
    let idx: Vec<usize> = (0..4).filter(|&i| i != spectrum.zero_index).collect();
    let vals: Vec<C64> = idx.iter().map(|&i| spectrum.pairs[i].value).collect();
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let gaps: Vec<f64> = pairs.iter().map(|&(a, b)| (vals[a] - vals[b]).norm()).collect();
    let (closest, min_gap) = gaps.iter().cloned().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    let max_gap = gaps.iter().cloned().fold(0.0, f64::max);
    let discriminant = characteristic_cubic(p)?.discriminant().norm() / s.powi(6);

    let diagnose = |e_star: C64, members: &[usize]| {
        let a = l - Mat4::identity() * e_star;
        let (ranks, sv) = power_ranks(&a, tols.rank_tol);
        let n = sv.len();
        let largest = sv[0].max(f64::MIN_POSITIVE);
        let geometric_multiplicity = sv.iter().filter(|&&x| x <= tols.sv_sep_tol * largest).count();
        let mut max_overlap: f64 = 0.0;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                max_overlap = max_overlap.max(spectrum.diagnostics.overlaps[idx[i]][idx[j]]);
            }
        }
        EpDiagnostics {
            discriminant,
            min_gap,
            max_gap,
            smallest_singular_values: [sv[n - 1], sv[n - 2]],
            geometric_multiplicity,
            max_overlap,
            ranks,
        }
    };

    let triple_tol = tols.gap3_tol * s;
    if max_gap <= 10.0 * triple_tol {
        let e_star = (vals[0] + vals[1] + vals[2]) / 3.0;
        let diagnostics = diagnose(e_star, &[0, 1, 2]);
        if max_gap > triple_tol {
            return Ok(Classification::Indeterminate {
                order: EpOrder::Three,
                gap: max_gap,
                band: (triple_tol, 10.0 * triple_tol),
                diagnostics,
            });
        }
        let jordan3 = diagnostics.ranks == [3, 2, 1] && diagnostics.geometric_multiplicity == 1;
        if jordan3 {
            return Ok(Classification::Ep(EpCandidate { params: *p, order: EpOrder::Three, e_star, diagnostics }));
        }
        return Ok(Classification::None(diagnostics));
    }

    let pair_tol = tols.gap_tol * s;
    let (a, b) = pairs[closest];
    let e_star = (vals[a] + vals[b]) * 0.5;
    let diagnostics = diagnose(e_star, &[a, b]);
    if min_gap <= pair_tol {
        if diagnostics.max_overlap >= 1.0 - tols.overlap_tol && diagnostics.geometric_multiplicity == 1 {
            return Ok(Classification::Ep(EpCandidate { params: *p, order: EpOrder::Two, e_star, diagnostics }));
        }
        return Ok(Classification::None(diagnostics));
    }
    if min_gap <= 10.0 * pair_tol {
        return Ok(Classification::Indeterminate {
            order: EpOrder::Two,
            gap: min_gap,
            band: (pair_tol, 10.0 * pair_tol),
            diagnostics,
        });
    }
    Ok(Classification::None(diagnostics))
}

fn reject_balanced(alpha: f64) -> Result<(), EpError> {
    if (alpha - 0.5).abs() < 1e-12 {
        Err(EpError::DivergentLocus { alpha })
    } else {
        Ok(())
    }
}

/// Bisection on the signed discriminant along γ at fixed (α, Δ), with Ω = 1.
/// Refines until the bracket collapses to rounding level, then confirms the
/// result with [`classify_ep`].
pub fn locate_ep2(alpha: f64, delta: f64, gamma_bracket: (f64, f64), tols: &EpTolerances) -> Result<EpCandidate, EpError> {
    reject_balanced(alpha)?;
    let f = |g: f64| -> Result<f64, EpError> { Ok(signed_discriminant(&SystemParams::new(1.0, delta, g, alpha)?)?) };
    let (mut lo, mut hi) = gamma_bracket;
    let (mut f_lo, f_hi) = (f(lo)?, f(hi)?);
    if f_lo == 0.0 {
        hi = lo;
    } else if f_hi == 0.0 {
        lo = hi;
    } else if f_lo.signum() == f_hi.signum() {
        return Err(EpError::NoRootInBracket { lo, hi, f_lo, f_hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let p = SystemParams::new(1.0, delta, gamma, alpha)?;
    match classify_ep(&p, tols)? {
        Classification::Ep(c) if c.order == EpOrder::Two => Ok(c),
        other => Err(EpError::NotConfirmed { expected: 2, found: Box::new(other) }),
    }
}

/// Sign-change brackets of the signed discriminant on a uniform γ grid.
pub fn find_ep2_brackets(alpha: f64, delta: f64, gamma_range: (f64, f64), samples: usize) -> Result<Vec<(f64, f64)>, EpError> {
    let n = samples.max(2);
    let step = (gamma_range.1 - gamma_range.0) / (n - 1) as f64;
    let mut out = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for k in 0..n {
        let g = gamma_range.0 + step * k as f64;
        let v = signed_discriminant(&SystemParams::new(1.0, delta, g, alpha)?)?;
        if let Some((pg, pv)) = prev {
            if (pv >= 0.0) != (v >= 0.0) {
                out.push((pg, g));
            }
        }
        prev = Some((g, v));
    }
    Ok(out)
}

/// Triple-root conditions in units of the problem scale: the depressed cubic
/// t³ + pt + q (real p, imaginary q in the E variable) must vanish identically.
fn triple_residual(alpha: f64, x: [f64; 2]) -> Result<[f64; 2], EpError> {
    let p = SystemParams::new(1.0, x[0], x[1].max(0.0), alpha)?;
    let (pp, qq) = characteristic_cubic(&p)?.depressed();
    let s = p.scale();
    Ok([pp.re / (s * s), qq.im / (s * s * s)])
}

/// The two third-order points (±Δ*, γ*) at fixed α, in units of Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct Ep3Pair {
    pub plus: EpCandidate,
    pub minus: EpCandidate,
}

/// Locates both third-order points by damped Newton iteration seeded from the
/// α = 0 solution rescaled by 1/|1 − 2α|.
pub fn locate_ep3(alpha: f64, tols: &EpTolerances) -> Result<Ep3Pair, EpError> {
    reject_balanced(alpha)?;
    let g0 = 13.5f64.sqrt() / (1.0 - 2.0 * alpha).abs();
    let d0 = 1.0 / 8f64.sqrt();
    let plus = locate_ep3_from(alpha, (d0, g0), tols)?;
    let minus = locate_ep3_from(alpha, (-d0, g0), tols)?;
    Ok(Ep3Pair { plus, minus })
}

/// Damped 2-D Newton on the triple-root conditions from an explicit seed (Δ, γ).
pub fn locate_ep3_from(alpha: f64, seed: (f64, f64), tols: &EpTolerances) -> Result<EpCandidate, EpError> {
    reject_balanced(alpha)?;
    const MAX_ITER: usize = 100;
    let mut x = [seed.0, seed.1];
    let mut r = triple_residual(alpha, x)?;
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        if norm(r) <= 1e-15 {
            converged = true;
            break;
        }
        let mut jac = [[0.0; 2]; 2];
        for k in 0..2 {
            let h = 1e-6 * x[k].abs().max(1.0);
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let (rp, rm) = (triple_residual(alpha, xp)?, triple_residual(alpha, xm)?);
            jac[0][k] = (rp[0] - rm[0]) / (2.0 * h);
            jac[1][k] = (rp[1] - rm[1]) / (2.0 * h);
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial = [x[0] + t * dx[0], x[1] + t * dx[1]];
            if trial[1] > 0.0 {
                let rt = triple_residual(alpha, trial)?;
                if norm(rt) < norm(r) {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let step = t * norm(dx);
        if !accepted || step <= 1e-15 * norm(x) {
            converged = norm(r) <= 1e-12;
            break;
        }
    }
    if !converged {
        return Err(EpError::NoConvergence { iterations: MAX_ITER, residual: norm(r) });
    }
    let p = SystemParams::new(1.0, x[0], x[1], alpha)?;
    match classify_ep(&p, tols)? {
        Classification::Ep(c) if c.order == EpOrder::Three => Ok(c),
        other => Err(EpError::NotConfirmed { expected: 3, found: Box::new(other) }),
    }
}

/// Which pair of the three nonzero-branch eigenvalues coalesces along a line.
/// On an exceptional line all three values are purely imaginary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoalescingPair {
    /// The two with the smaller decay rate.
    LeastDamped,
    /// The two with the larger decay rate.
    MostDamped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExceptionalLine {
    /// Vertices (Δ/Ω, γ/Ω).
    pub points: Vec<[f64; 2]>,
    pub pair: CoalescingPair,
    /// Index into [`LineTrace::ep3`] when the first vertex is a third-order point.
    pub start_ep3: Option<usize>,
    pub end_ep3: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineTrace {
    pub alpha: f64,
    pub lines: Vec<ExceptionalLine>,
    /// Third-order points inside the window.
    pub ep3: Vec<EpCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub delta: (f64, f64),
    pub gamma: (f64, f64),
    /// Grid nodes along Δ and γ.
    pub nodes: (usize, usize),
}

impl Window {
    fn contains(&self, x: [f64; 2]) -> bool {
        x[0] >= self.delta.0 && x[0] <= self.delta.1 && x[1] >= self.gamma.0 && x[1] <= self.gamma.1
    }
}

fn grid_value(w: &Window, i: usize, j: usize) -> [f64; 2] {
    let (nd, ng) = w.nodes;
    [
        w.delta.0 + (w.delta.1 - w.delta.0) * i as f64 / (nd - 1) as f64,
        w.gamma.0 + (w.gamma.1 - w.gamma.0) * j as f64 / (ng - 1) as f64,
    ]
}

fn disc_at(alpha: f64, x: [f64; 2]) -> Result<f64, EpError> {
    Ok(signed_discriminant(&SystemParams::new(1.0, x[0], x[1], alpha)?)?)
}

fn bisect_segment(alpha: f64, a: [f64; 2], b: [f64; 2], fa: f64) -> Result<[f64; 2], EpError> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let positive_lo = fa >= 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (disc_at(alpha, at(mid))? >= 0.0) == positive_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(at(0.5 * (lo + hi)))
}

/// Exceptional lines (zero set of the signed discriminant) over a (Δ, γ)
/// window at fixed α, in units of Ω.
///
/// Sign changes along grid edges are refined by bisection and connected by
/// marching squares. Third-order points inside the window split the polyline
/// passing nearest to them, and the split ends are snapped onto them.
pub fn trace_exceptional_lines(alpha: f64, window: &Window, tols: &EpTolerances) -> Result<LineTrace, EpError> {
    let (nd, ng) = window.nodes;
    assert!(nd >= 2 && ng >= 2, "grid needs at least two nodes per axis");
    let values: Vec<f64> = (0..nd * ng)
        .into_par_iter()
        .map(|k| disc_at(alpha, grid_value(window, k / ng, k % ng)))
        .collect::<Result<_, _>>()?;
    let f = |i: usize, j: usize| values[i * ng + j];
    let sign = |i: usize, j: usize| f(i, j) >= 0.0;

    // Edge keys: (0, i, j) joins (i, j)-(i+1, j); (1, i, j) joins (i, j)-(i, j+1).
    let mut edge_ids: HashMap<(u8, usize, usize), usize> = HashMap::new();
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut edge_point = |key: (u8, usize, usize)| -> Result<Option<usize>, EpError> {
        if let Some(&id) = edge_ids.get(&key) {
            return Ok(Some(id));
        }
        let (kind, i, j) = key;
        let (i2, j2) = if kind == 0 { (i + 1, j) } else { (i, j + 1) };
        if sign(i, j) == sign(i2, j2) {
            return Ok(None);
        }
        let x = bisect_segment(alpha, grid_value(window, i, j), grid_value(window, i2, j2), f(i, j))?;
        let id = points.len();
        points.push(x);
        edge_ids.insert(key, id);
        Ok(Some(id))
    };

    let mut links: Vec<(usize, usize)> = Vec::new();
    for i in 0..nd - 1 {
        for j in 0..ng - 1 {
            let bottom = edge_point((0, i, j))?;
            let right = edge_point((1, i + 1, j))?;
            let top = edge_point((0, i, j + 1))?;
            let left = edge_point((1, i, j))?;
            let present: Vec<usize> = [bottom, right, top, left].into_iter().flatten().collect();
            match present.len() {
                2 => links.push((present[0], present[1])),
                4 => {
                    let a = grid_value(window, i, j);
                    let b = grid_value(window, i + 1, j + 1);
                    let centre = disc_at(alpha, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])? >= 0.0;
                    let (b_, r_, t_, l_) = (bottom.unwrap(), right.unwrap(), top.unwrap(), left.unwrap());
                    if centre == sign(i, j) {
                        links.push((b_, r_));
                        links.push((t_, l_));
                    } else {
                        links.push((b_, l_));
                        links.push((r_, t_));
                    }
                }
                _ => {}
            }
        }
    }

    let mut polylines = chain(points.len(), &links)
        .into_iter()
        .map(|(ids, closed)| (ids.into_iter().map(|k| points[k]).collect::<Vec<_>>(), closed))
        .collect::<Vec<_>>();

    let mut ep3 = Vec::new();
    if (alpha - 0.5).abs() >= 1e-12 && !polylines.is_empty() {
        let pair = locate_ep3(alpha, tols)?;
        for c in [pair.minus, pair.plus] {
            if window.contains([c.params.delta(), c.params.gamma()]) {
                ep3.push(c);
            }
        }
    }

    let cell = {
        let a = grid_value(window, 0, 0);
        let b = grid_value(window, 1, 1);
        (b[0] - a[0]).hypot(b[1] - a[1])
    };
    let mut pieces: Vec<(Vec<[f64; 2]>, Option<usize>, Option<usize>)> = Vec::new();
    let mut loops: Vec<Vec<[f64; 2]>> = Vec::new();
    for (pts, closed) in polylines.drain(..) {
        if closed {
            loops.push(pts);
        } else {
            pieces.push((pts, None, None));
        }
    }
    for (k, c) in ep3.iter().enumerate() {
        let target = [c.params.delta(), c.params.gamma()];
        let dist = |x: &[f64; 2]| (x[0] - target[0]).hypot(x[1] - target[1]);
        let best_open = pieces
            .iter()
            .enumerate()
            .flat_map(|(pi, (pts, _, _))| pts.iter().enumerate().map(move |(vi, x)| (pi, vi, dist(x))))
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let best_loop = loops
            .iter()
            .enumerate()
            .flat_map(|(li, pts)| pts.iter().enumerate().map(move |(vi, x)| (li, vi, dist(x))))
            .min_by(|a, b| a.2.total_cmp(&b.2));
        let loop_wins = match (best_open, best_loop) {
            (Some(o), Some(l)) => l.2 < o.2,
            (None, Some(_)) => true,
            _ => false,
        };
        if loop_wins {
            let (li, vi, d) = best_loop.unwrap();
            if d > 5.0 * cell {
                continue;
            }
            let mut pts = loops.remove(li);
            pts.rotate_left(vi);
            pts[0] = target;
            pts.push(target);
            pieces.push((pts, Some(k), Some(k)));
            continue;
        }
        let Some((pi, vi, d)) = best_open else { continue };
        if d > 5.0 * cell {
            continue;
        }
        let (pts, start, end) = pieces.remove(pi);
        let last = pts.len() - 1;
        if vi == 0 || vi == last {
            let mut pts = pts;
            pts[vi] = target;
            let (s, e) = if vi == 0 { (Some(k), end) } else { (start, Some(k)) };
            pieces.push((pts, s, e));
        } else {
            let mut head = pts[..=vi].to_vec();
            let mut tail = pts[vi..].to_vec();
            *head.last_mut().unwrap() = target;
            tail[0] = target;
            pieces.push((head, start, Some(k)));
            pieces.push((tail, Some(k), end));
        }
    }
    for pts in loops {
        pieces.push((pts, None, None));
    }

    let mut lines = Vec::with_capacity(pieces.len());
    for (pts, start_ep3, end_ep3) in pieces {
        let mid = pts[pts.len() / 2];
        let pair = coalescing_pair(&SystemParams::new(1.0, mid[0], mid[1], alpha)?)?;
        lines.push(ExceptionalLine { points: pts, pair, start_ep3, end_ep3 });
    }
    Ok(LineTrace { alpha, lines, ep3 })
}

/// Connected components of a graph whose vertices have degree at most two:
/// open chains first (walked from an end), then closed loops.
fn chain(n: usize, links: &[(usize, usize)]) -> Vec<(Vec<usize>, bool)> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in links {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let walk = |start: usize, seen: &mut Vec<bool>| {
        let mut path = vec![start];
        seen[start] = true;
        let mut current = start;
        while let Some(&next) = adj[current].iter().find(|&&k| !seen[k]) {
            seen[next] = true;
            path.push(next);
            current = next;
        }
        path
    };
    for start in 0..n {
        if !seen[start] && adj[start].len() == 1 {
            out.push((walk(start, &mut seen), false));
        }
    }
    for start in 0..n {
        if !seen[start] && !adj[start].is_empty() {
            out.push((walk(start, &mut seen), true));
        }
    }
    out
}

fn coalescing_pair(p: &SystemParams) -> Result<CoalescingPair, SpectralError> {
    let r = characteristic_cubic(p)?.roots();
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let &(a, b, c) = pairs.iter().min_by(|x, y| (r[x.0] - r[x.1]).norm().total_cmp(&(r[y.0] - r[y.1]).norm())).unwrap();
    Ok(if 0.5 * (r[a].im + r[b].im) > r[c].im { CoalescingPair::LeastDamped } else { CoalescingPair::MostDamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpKind {
    /// Second-order point on the Δ = 0 slice.
    Ep2AtZeroDetuning,
    Ep3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub alpha: f64,
    /// One candidate for EP2; both ±Δ* candidates for EP3 (plus first).
    pub result: Result<Vec<EpCandidate>, EpError>,
}

pub const DEFAULT_EXCLUSION_BAND: f64 = 0.02;

/// Locates the requested exceptional point for every α on the grid. Points
/// inside the exclusion band around α = 0.5 and individual failures are
/// reported per point.
pub fn ep_trajectory_vs_alpha(kind: EpKind, alphas: &[f64], exclusion_band: f64, tols: &EpTolerances) -> Vec<TrajectoryPoint> {
    alphas
        .par_iter()
        .map(|&alpha| {
            let result = if (alpha - 0.5).abs() < exclusion_band {
                Err(EpError::Excluded { alpha, band: exclusion_band })
            } else {
                match kind {
                    EpKind::Ep2AtZeroDetuning => locate_ep2_scan(alpha, 0.0, tols).map(|c| vec![c]),
                    EpKind::Ep3 => locate_ep3(alpha, tols).map(|pair| vec![pair.plus, pair.minus]),
                }
            };
            TrajectoryPoint { alpha, result }
        })
        .collect()
}

/// Locates the lowest-γ second-order point at fixed (α, Δ) by bracket
/// doubling from small γ followed by [`locate_ep2`].
pub fn locate_ep2_scan(alpha: f64, delta: f64, tols: &EpTolerances) -> Result<EpCandidate, EpError> {
    reject_balanced(alpha)?;
    let f = |g: f64| disc_at(alpha, [delta, g]);
    let mut lo = 1e-3;
    let f_lo = f(lo)?;
    let mut hi = 2.0 * lo;
    for _ in 0..64 {
        let f_hi = f(hi)?;
        if (f_hi >= 0.0) != (f_lo >= 0.0) {
            return locate_ep2(alpha, delta, (lo, hi), tols);
        }
        lo = hi;
        hi *= 2.0;
    }
    Err(EpError::NoRootInBracket { lo: 1e-3, hi, f_lo, f_hi: f(hi)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exact,
    Broken,
    AtEp,
}

/// Phase of a Δ = 0 point relative to the second-order point
/// γ* = 4Ω/|1 − 2α|, cross-checked against the spectrum: in the exact phase
/// the mirror pair has split real parts, in the broken phase all three
/// eigenvalues are purely imaginary.
pub fn phase_of(p: &SystemParams, rel_tol: f64) -> Result<Phase, EpError> {
    p.require_positive_omega()?;
    let s = p.scale();
    if p.delta().abs() > 1e-12 * s {
        return Err(EpError::NonZeroDetuning { delta: p.delta() });
    }
    let k = (1.0 - 2.0 * p.alpha()).abs();
    let formula = if k == 0.0 {
        Phase::Exact
    } else {
        let star = 4.0 * p.omega() / k;
        if (p.gamma() - star).abs() <= rel_tol * star {
            Phase::AtEp
        } else if p.gamma() < star {
            Phase::Exact
        } else {
            Phase::Broken
        }
    };
    let roots = characteristic_cubic(p)?.roots();
    let min_gap = [(0, 1), (0, 2), (1, 2)].iter().map(|&(a, b)| (roots[a] - roots[b]).norm()).fold(f64::INFINITY, f64::min);
    let max_re = roots.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    let spectrum = if min_gap <= 1e-6 * s {
        Phase::AtEp
    } else if max_re > 1e-7 * s {
        Phase::Exact
    } else {
        Phase::Broken
    };
    if formula != Phase::AtEp && spectrum != Phase::AtEp && formula != spectrum {
        return Err(EpError::PhaseMismatch { formula, spectrum });
    }
    Ok(formula)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(delta: f64, gamma: f64, alpha: f64) -> SystemParams {
        SystemParams::new(1.0, delta, gamma, alpha).unwrap()
    }

    #[test]
    fn discriminant_examples() {
        assert!(cubic_discriminant(&params(0.0, 4.0, 0.0)).unwrap().norm() <= 1e-9);
        let d = cubic_discriminant(&params(0.0, 0.0, 0.3)).unwrap();
        assert_abs_diff_eq!(d.re, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-12);
        assert!(cubic_discriminant(&params(1.0 / 8f64.sqrt(), 13.5f64.sqrt(), 1.0)).unwrap().norm() <= 1e-9);
    }

    #[test]
    fn discriminant_is_real_off_axis() {
        for &(d, g, a) in &[(0.3, 2.0, 0.1), (-0.7, 5.0, 0.9), (1.2, 0.4, 0.4)] {
            let disc = cubic_discriminant(&params(d, g, a)).unwrap();
            assert!(disc.im.abs() <= 1e-12 * disc.norm().max(1.0), "{disc}");
        }
    }

    #[test]
    fn balanced_alpha_discriminant_is_constant() {
        for &(d, g) in &[(0.0, 1.0), (0.5, 10.0), (-2.0, 3.0)] {
            // Roots ±r − iγ/2 and −iγ/2, so disc = 4r⁶ with r² = Ω² + Δ².
            let p = params(d, g, 0.5);
            let raw = cubic_discriminant(&p).unwrap();
            assert_abs_diff_eq!(raw.re, 4.0 * (1.0 + d * d).powi(3), epsilon = 1e-9);
        }
    }

    #[test]
    fn classify_ep2_at_zero_detuning() {
        let c = classify_ep(&params(0.0, 4.0, 0.0), &EpTolerances::default()).unwrap();
        let c = c.candidate().expect("order 2");
        assert_eq!(c.order, EpOrder::Two);
        assert!((c.e_star - C64::new(0.0, -1.0)).norm() < 1e-6, "{}", c.e_star);
        assert_eq!(c.diagnostics.geometric_multiplicity, 1);
    }

    #[test]
    fn classify_ep3() {
        let g = 13.5f64.sqrt();
        let c = classify_ep(&params(1.0 / 8f64.sqrt(), g, 0.0), &EpTolerances::default()).unwrap();
        let c = c.candidate().expect("order 3");
        assert_eq!(c.order, EpOrder::Three);
        assert_abs_diff_eq!(c.e_star.im, -1.224_744_871_391_589, epsilon = 1e-5);
        assert_eq!(c.diagnostics.ranks, [3, 2, 1]);
    }

    #[test]
    fn classify_none_at_balanced_alpha() {
        let c = classify_ep(&params(0.5, 10.0, 0.5), &EpTolerances::default()).unwrap();
        assert!(matches!(c, Classification::None(_)));
    }

    #[test]
    fn classify_indeterminate_band() {
        // Pair gap ≈ 2√(2δ) for a step δ past the point: δ = 1e-11 puts it near 1e-5.
        let c = classify_ep(&params(0.0, 4.0 - 1e-11, 0.0), &EpTolerances::default()).unwrap();
        assert!(matches!(c, Classification::Indeterminate { order: EpOrder::Two, .. }), "{c:?}");
    }

    #[test]
    fn locate_ep2_examples() {
        let t = EpTolerances::default();
        let c = locate_ep2(0.0, 0.0, (3.0, 5.0), &t).unwrap();
        assert_abs_diff_eq!(c.params.gamma(), 4.0, epsilon = 1e-6);
        let c = locate_ep2(1.0, 0.0, (3.0, 5.0), &t).unwrap();
        assert_abs_diff_eq!(c.params.gamma(), 4.0, epsilon = 1e-6);
        let c = locate_ep2(0.25, 0.0, (6.0, 9.0), &t).unwrap();
        assert_abs_diff_eq!(c.params.gamma(), 8.0, epsilon = 1e-5);
        assert!((c.e_star - C64::new(0.0, -3.0)).norm() < 1e-6);
    }

    #[test]
    fn locate_ep2_errors() {
        let t = EpTolerances::default();
        assert!(matches!(locate_ep2(0.5, 0.0, (1.0, 9.0), &t), Err(EpError::DivergentLocus { .. })));
        assert!(matches!(locate_ep2(0.0, 0.0, (0.5, 2.0), &t), Err(EpError::NoRootInBracket { .. })));
    }

    #[test]
    fn locate_ep3_examples() {
        let t = EpTolerances::default();
        for alpha in [0.0, 1.0] {
            let pair = locate_ep3(alpha, &t).unwrap();
            assert_abs_diff_eq!(pair.plus.params.delta(), 0.353_553_390_593_273_7, epsilon = 1e-6);
            assert_abs_diff_eq!(pair.minus.params.delta(), -0.353_553_390_593_273_7, epsilon = 1e-6);
            assert_abs_diff_eq!(pair.plus.params.gamma(), 3.674_234_614_174_767, epsilon = 1e-6);
        }
        let pair = locate_ep3(0.4, &t).unwrap();
        assert_abs_diff_eq!(pair.plus.params.gamma(), 18.371_173_070_873_837, epsilon = 1e-5);
    }

    #[test]
    fn locate_ep3_from_offset_seed() {
        let c = locate_ep3_from(0.0, (0.3, 3.2), &EpTolerances::default()).unwrap();
        assert_abs_diff_eq!(c.params.delta(), 1.0 / 8f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(c.params.gamma(), 13.5f64.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn exceptional_lines_topology() {
        let w = Window { delta: (-1.0, 1.0), gamma: (2.0, 6.0), nodes: (201, 201) };
        let trace = trace_exceptional_lines(0.0, &w, &EpTolerances::default()).unwrap();
        assert_eq!(trace.ep3.len(), 2);
        assert_eq!(trace.lines.len(), 3, "{:?}", trace.lines.iter().map(|l| (l.points.len(), l.start_ep3, l.end_ep3)).collect::<Vec<_>>());
        let mut junctions = [0usize; 2];
        for line in &trace.lines {
            for k in [line.start_ep3, line.end_ep3].into_iter().flatten() {
                junctions[k] += 1;
            }
        }
        assert_eq!(junctions, [2, 2]);
    }

    #[test]
    fn exceptional_lines_empty_windows() {
        let t = EpTolerances::default();
        let w = Window { delta: (-1.0, 1.0), gamma: (0.0, 2.0), nodes: (41, 41) };
        assert!(trace_exceptional_lines(0.0, &w, &t).unwrap().lines.is_empty());
        let w = Window { delta: (-1.0, 1.0), gamma: (2.0, 6.0), nodes: (41, 41) };
        assert!(trace_exceptional_lines(0.5, &w, &t).unwrap().lines.is_empty());
    }

    #[test]
    fn chain_open_and_closed() {
        let links = [(0, 1), (1, 2), (3, 4), (4, 5), (5, 3)];
        let mut parts = chain(6, &links);
        parts.sort_by_key(|p| p.1);
        assert_eq!(parts[0], (vec![0, 1, 2], false));
        assert!(parts[1].1 && parts[1].0.len() == 3);
    }

    #[test]
    fn trajectory_ep2_values() {
        let alphas = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        let pts = ep_trajectory_vs_alpha(EpKind::Ep2AtZeroDetuning, &alphas, DEFAULT_EXCLUSION_BAND, &EpTolerances::default());
        for pt in &pts {
            if pt.alpha == 0.5 {
                assert!(matches!(pt.result, Err(EpError::Excluded { .. })));
                continue;
            }
            let g = pt.result.as_ref().unwrap()[0].params.gamma();
            assert_abs_diff_eq!(g * (1.0 - 2.0 * pt.alpha).abs(), 4.0, epsilon = 1e-5);
        }
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phase_of(&params(0.0, 2.0, 0.0), 1e-9).unwrap(), Phase::Exact);
        assert_eq!(phase_of(&params(0.0, 6.0, 0.0), 1e-9).unwrap(), Phase::Broken);
        assert_eq!(phase_of(&params(0.0, 100.0, 0.5), 1e-9).unwrap(), Phase::Exact);
        assert_eq!(phase_of(&params(0.0, 4.0, 0.0), 1e-9).unwrap(), Phase::AtEp);
        assert!(matches!(phase_of(&params(0.2, 2.0, 0.0), 1e-9), Err(EpError::NonZeroDetuning { .. })));
    }
}
