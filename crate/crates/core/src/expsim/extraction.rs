//! Liouvillian eigenvalues from sampled observables: matrix pencil with the
//! stationary offset as an extra zero-frequency pole, then a weighted
//! least-squares polish of the full exponential-sum model.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::fitting::{effective_sigmas, levenberg_marquardt};
use crate::linalg::eigenvalues_qr;
use crate::dynamics::Series;
use crate::lindblad::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractionError {
    #[error("model order must be 1, 2 or 3, got {0}")]
    InvalidOrder(usize),
    #[error("series too short: {len} samples, need at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("sampling is not uniform at index {index}")]
    NonUniform { index: usize },
    #[error("channel {channel} does not share the time grid of channel 0")]
    GridMismatch { channel: usize },
    #[error("no channels given")]
    NoChannels,
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("series is constant; no decaying modes present")]
    NoSignal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionOptions {
    /// Singular values below `rank_tol·s₀` count as zero.
    pub rank_tol: f64,
    /// A ratio s_{k−1}/s_k above this truncates the model at k modes.
    pub sv_gap: f64,
    /// Extracted values closer than this (relative to the largest |E|) are reported as merged.
    pub coalescence_tol: f64,
    pub polish: bool,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions { rank_tol: 1e-8, sv_gap: 1e3, coalescence_tol: 1e-4, polish: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeEstimate {
    pub value: C64,
    /// Standard errors of Re E and Im E.
    pub std_error: [f64; 2],
}

impl ModeEstimate {
    /// Whether value ± k·σ contains `truth` in both components, up to rounding
    /// for components fixed by the ansatz.
    pub fn covers(&self, truth: C64, k: f64) -> bool {
        let slack = 1e-9 * (1.0 + truth.norm());
        (self.value.re - truth.re).abs() <= k * self.std_error[0] + slack && (self.value.im - truth.im).abs() <= k * self.std_error[1] + slack
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderReduction {
    /// Fewer significant Hankel singular values than requested modes.
    RankDeficient { requested: usize, rank: usize, gap_ratio: f64 },
    /// Extracted eigenvalues that coincide within the coalescence tolerance.
    Coalescence { pairs: Vec<(usize, usize)>, min_distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueEstimate {
    /// Sorted by Re E, then Im E.
    pub modes: Vec<ModeEstimate>,
    pub requested_order: usize,
    pub model_order: usize,
    /// Fitted stationary value per channel.
    pub offsets: Vec<f64>,
    /// Root-mean-square of the unweighted fit residuals.
    pub residual_rms: f64,
    pub chi2: f64,
    pub dof: usize,
    /// Hankel singular values, largest first.
    pub singular_values: Vec<f64>,
    pub order_reduction: Vec<OrderReduction>,
    pub polished: bool,
}

impl EigenvalueEstimate {
    pub fn values(&self) -> Vec<C64> {
        self.modes.iter().map(|m| m.value).collect()
    }

    pub fn is_order_reduced(&self) -> bool {
        !self.order_reduction.is_empty()
    }
}

fn validate(channels: &[Series], order: usize) -> Result<f64, ExtractionError> {
    if !(1..=3).contains(&order) {
        return Err(ExtractionError::InvalidOrder(order));
    }
    let first = channels.first().ok_or(ExtractionError::NoChannels)?;
    let n = first.times.len();
    let required = (4 * order).max(4);
    if n < required {
        return Err(ExtractionError::TooShort { len: n, required });
    }
    for (c, s) in channels.iter().enumerate() {
        if s.times != first.times || s.values.len() != n || s.std_errors.as_ref().is_some_and(|e| e.len() != n) {
            return Err(ExtractionError::GridMismatch { channel: c });
        }
        if s.values.iter().chain(&s.times).any(|v| !v.is_finite()) {
            return Err(ExtractionError::NonFinite);
        }
    }
    let t = &first.times;
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(ExtractionError::NonUniform { index: 1 });
    }
    for k in 1..n {
        if ((t[k] - t[k - 1]) - dt).abs() > 1e-6 * dt {
            return Err(ExtractionError::NonUniform { index: k });
        }
    }
    Ok(dt)
}

/// Poles of a real pencil, with complex values snapped to exact conjugate pairs.
fn conjugate_poles(p: &DMatrix<f64>) -> Vec<C64> {
    let complex = p.map(|v| C64::new(v, 0.0));
    let mut raw = eigenvalues_qr(&complex).unwrap_or_default();
    let scale = raw.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut out = Vec::with_capacity(raw.len());
    raw.sort_by(|a, b| b.im.total_cmp(&a.im));
    while let Some(z) = raw.first().copied() {
        raw.remove(0);
        if z.im.abs() <= tol {
            out.push(C64::new(z.re, 0.0));
            continue;
        }
        let partner = (0..raw.len()).min_by(|&i, &j| (raw[i] - z.conj()).norm().total_cmp(&(raw[j] - z.conj()).norm()));
        match partner {
            Some(k) if raw[k].im < 0.0 => {
                let w = raw.remove(k);
                let m = (z + w.conj()) * 0.5;
                out.extend([m, m.conj()]);
            }
            _ => out.push(C64::new(z.re, 0.0)),
        }
    }
    out
}

struct Pencil {
    poles: Vec<C64>,
    singular_values: Vec<f64>,
    /// Number of singular vectors used.
    rank: usize,
    /// Every available pole slot carried signal (always the case with noise).
    saturated: bool,
}

/// Matrix pencil with one extra pole reserved for the stationary offset.
fn matrix_pencil(channels: &[Series], order: usize, opts: &ExtractionOptions) -> Result<Pencil, ExtractionError> {
    let n = channels[0].values.len();
    let capacity = order + 1;
    let l = ((n - 1) / 3).max(capacity);
    let rows = n - l;
    let mut y = DMatrix::<f64>::zeros(rows * channels.len(), l + 1);
    for (c, s) in channels.iter().enumerate() {
        for i in 0..rows {
            for j in 0..=l {
                y[(c * rows + i, j)] = s.values[i + j];
            }
        }
    }
    let svd = y.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&k| svd.singular_values[k]).collect();
    if sv.is_empty() || sv[0] <= 0.0 {
        return Err(ExtractionError::NoSignal);
    }

    let mut m = sv.iter().take(capacity).filter(|&&s| s > opts.rank_tol * sv[0]).count();
    for k in 1..=capacity.min(sv.len() - 1) {
        let ratio = if sv[k] > 0.0 { sv[k - 1] / sv[k] } else { f64::INFINITY };
        if k <= m && ratio > opts.sv_gap {
            m = k;
            break;
        }
    }

    let mut v = DMatrix::<f64>::zeros(l + 1, m);
    for (col, &k) in idx.iter().take(m).enumerate() {
        for r in 0..=l {
            v[(r, col)] = v_t[(k, r)];
        }
    }
    let v1 = v.rows(0, l).into_owned();
    let v2 = v.rows(1, l).into_owned();
    let p = v1.pseudo_inverse(1e-15).expect("non-negative tolerance") * v2;
    let mut poles = conjugate_poles(&p);
    let saturated = m == capacity;

    // The stationary offset is the real pole nearest z = 1. Below full capacity
    // it is only removed when it is numerically exact.
    let offset = poles
        .iter()
        .enumerate()
        .filter(|(_, z)| z.im == 0.0)
        .min_by(|a, b| (a.1 - 1.0).norm().total_cmp(&(b.1 - 1.0).norm()))
        .map(|(i, z)| (i, (z - 1.0).norm()));
    match offset {
        Some((i, _)) if saturated => {
            poles.remove(i);
        }
        Some((i, d)) if d <= 1e-6 => {
            poles.remove(i);
        }
        None if saturated => {
            // No real pole: the offset was absorbed by the slowest pair.
            let k = (0..poles.len()).min_by(|&a, &b| (poles[a] - 1.0).norm().total_cmp(&(poles[b] - 1.0).norm())).expect("non-empty");
            let z = poles[k];
            poles.retain(|w| *w != z && *w != z.conj());
        }
        _ => {}
    }
    if poles.is_empty() && !saturated {
        return Err(ExtractionError::NoSignal);
    }
    Ok(Pencil { poles, singular_values: sv, rank: m, saturated })
}

/// Ansatz terms: mirror pairs ±a + ib and purely imaginary modes ib.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Pair,
    Imaginary,
}

impl Mode {
    fn width(self) -> usize {
        match self {
            Mode::Pair => 2,
            Mode::Imaginary => 1,
        }
    }
}

fn mode_count(modes: &[Mode]) -> usize {
    modes.iter().map(|m| m.width()).sum()
}

/// Poles mapped to E = i·ln z/dt. Poles on the negative real axis are folded
/// onto the imaginary axis; aliased oscillations are not representable.
fn modes_from_poles(poles: &[C64], dt: f64) -> (Vec<Mode>, Vec<f64>) {
    let mut modes = Vec::new();
    let mut x = Vec::new();
    let mut k = 0;
    while k < poles.len() {
        let z = poles[k];
        let e = C64::new(0.0, 1.0) * z.ln() / dt;
        if z.im != 0.0 && k + 1 < poles.len() {
            modes.push(Mode::Pair);
            x.extend([e.re.abs(), e.im]);
            k += 2;
        } else {
            modes.push(Mode::Imaginary);
            x.push(e.im);
            k += 1;
        }
    }
    (modes, x)
}

/// Mode structures with exactly `count` eigenvalues.
fn structures(count: usize) -> Vec<Vec<Mode>> {
    use Mode::{Imaginary as I, Pair as P};
    match count {
        1 => vec![vec![I]],
        2 => vec![vec![P], vec![I, I]],
        3 => vec![vec![I, P], vec![I, I, I]],
        _ => Vec::new(),
    }
}

/// Nonlinear parameter vectors on a logarithmic grid of decay rates and
/// frequencies; imaginary modes are taken in strictly increasing rate order.
fn grid_candidates(modes: &[Mode], rates: &[f64], freqs: &[f64]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    let mut last_rate: Vec<Option<usize>> = vec![None];
    for m in modes {
        let mut next = Vec::new();
        let mut next_last = Vec::new();
        for (x, last) in out.iter().zip(&last_rate) {
            match m {
                Mode::Imaginary => {
                    for (r, &rate) in rates.iter().enumerate() {
                        if last.is_some_and(|l| r <= l) {
                            continue;
                        }
                        let mut v = x.clone();
                        v.push(-rate);
                        next.push(v);
                        next_last.push(Some(r));
                    }
                }
                Mode::Pair => {
                    for &f in freqs {
                        for &rate in rates {
                            let mut v = x.clone();
                            v.extend([f, -rate]);
                            next.push(v);
                            next_last.push(*last);
                        }
                    }
                }
            }
        }
        out = next;
        last_rate = next_last;
    }
    out
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn basis_len(modes: &[Mode]) -> usize {
    1 + mode_count(modes)
}

fn basis_row(modes: &[Mode], x: &[f64], t: f64, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    let mut i = 0;
    for m in modes {
        match m {
            Mode::Pair => {
                let (a, b) = (x[i], x[i + 1]);
                let env = (b * t).exp();
                out.extend([env * (a * t).cos(), env * (a * t).sin()]);
            }
            Mode::Imaginary => out.push((x[i] * t).exp()),
        }
        i += m.width();
    }
}

/// λ = −iE for each mode, conjugate pairs adjacent.
fn roots_of_modes(modes: &[Mode], x: &[f64]) -> Vec<C64> {
    let mut out = Vec::new();
    let mut i = 0;
    for m in modes {
        match m {
            Mode::Pair => out.extend([C64::new(x[i + 1], -x[i]), C64::new(x[i + 1], x[i])]),
            Mode::Imaginary => out.push(C64::new(x[i], 0.0)),
        }
        i += m.width();
    }
    out
}

/// Coefficients [c₀, …, c_{M−1}] of the monic polynomial Π(λ − λ_k); the
/// imaginary parts cancel for conjugate-closed root sets.
fn poly_from_roots(roots: &[C64]) -> Vec<f64> {
    let mut c = vec![C64::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![C64::new(0.0, 0.0); c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * r;
        }
        c = next;
    }
    c[..roots.len()].iter().map(|z| z.re).collect()
}

/// Real root of λ³ + a₂λ² + a₁λ + a₀ by bisection on the Cauchy bound, then Newton.
fn real_cubic_root(a2: f64, a1: f64, a0: f64) -> f64 {
    let f = |x: f64| ((x + a2) * x + a1) * x + a0;
    let bound = 1.0 + a2.abs().max(a1.abs()).max(a0.abs());
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) < 0.0) == (f(lo) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = (3.0 * x + 2.0 * a2) * x + a1;
        if d == 0.0 {
            break;
        }
        let next = x - f(x) / d;
        if f(next).abs() < f(x).abs() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// Roots of λ² + bλ + c; complex roots come out as an exact conjugate pair.
fn real_quadratic_roots(b: f64, c: f64) -> [C64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return [C64::new(0.0, 0.0); 2];
        }
        [C64::new(q, 0.0), C64::new(c / q, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [C64::new(-0.5 * b, im), C64::new(-0.5 * b, -im)]
    }
}

/// Roots of a monic real polynomial of degree ≤ 3 given as [c₀, …, c_{M−1}].
fn real_poly_roots(c: &[f64]) -> Vec<C64> {
    match c.len() {
        1 => vec![C64::new(-c[0], 0.0)],
        2 => real_quadratic_roots(c[1], c[0]).to_vec(),
        3 => {
            let r = real_cubic_root(c[2], c[1], c[0]);
            let [z1, z2] = real_quadratic_roots(c[2] + r, c[1] + r * (c[2] + r));
            vec![C64::new(r, 0.0), z1, z2]
        }
        _ => unreachable!("model order is at most 3"),
    }
}

/// Rows e₁ᵀ·exp(C·t_n) of the companion matrix of `c` on a uniform grid.
/// Together they span every solution of the mode polynomial's differential
/// equation, including the secular terms at coinciding roots.
fn companion_basis(c: &[f64], dt: f64, n: usize) -> DMatrix<f64> {
    let m = c.len();
    let mut comp = DMatrix::<f64>::zeros(m, m);
    for k in 0..m - 1 {
        comp[(k, k + 1)] = 1.0;
    }
    for k in 0..m {
        comp[(m - 1, k)] = -c[k];
    }
    let step = (comp * dt).exp();
    let mut out = DMatrix::<f64>::zeros(n, m);
    let mut row = nalgebra::RowDVector::<f64>::zeros(m);
    row[0] = 1.0;
    for i in 0..n {
        out.set_row(i, &row);
        row = &row * &step;
    }
    out
}

/// Whether every mode decays by at most e per step, stays below the Nyquist
/// frequency and changes appreciably over the record. Faster modes cannot be
/// told apart from a jump in the first sample, slower ones from the constant.
/// Grid points per mode structure that are polished.
const GRID_SEEDS: usize = 3;

fn resolvable(c: &[f64], dt: f64, span: f64) -> bool {
    real_poly_roots(c).iter().all(|l| l.re.abs() * dt <= 1.0 && l.im.abs() * dt <= std::f64::consts::PI && l.norm() * span >= 1.0)
}

/// Injective assignment of `values` to `reference` with least total distance.
fn matching(values: &[C64], reference: &[C64]) -> Vec<usize> {
    const PERMS: [&[usize]; 9] = [&[0], &[0, 1], &[1, 0], &[0, 1, 2], &[0, 2, 1], &[1, 0, 2], &[1, 2, 0], &[2, 0, 1], &[2, 1, 0]];
    let cost = |p: &[usize]| values.iter().zip(p).map(|(v, &k)| (v - reference[k]).norm()).sum::<f64>();
    PERMS
        .iter()
        .filter(|p| p.len() == values.len())
        .min_by(|a, b| cost(a).total_cmp(&cost(b)))
        .map(|p| p.to_vec())
        .unwrap_or_default()
}

/// Samples drawn to propagate the coefficient covariance to the eigenvalues.
const PROPAGATION_SAMPLES: usize = 2000;
const PROPAGATION_SEED: u64 = 0x5eed;

/// RMS deviation of Re E and Im E over coefficient draws from N(c, Σ). Unlike
/// first-order propagation this keeps the square-root sensitivity near
/// coinciding roots.
fn propagate(c: &[f64], cov: &DMatrix<f64>, roots: &[C64]) -> Vec<[f64; 2]> {
    let m = c.len();
    if cov.iter().any(|v| !v.is_finite()) {
        return vec![[f64::INFINITY; 2]; roots.len()];
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_d);
    let mut rng = ChaCha8Rng::seed_from_u64(PROPAGATION_SEED);
    let mut acc = vec![[0.0; 2]; roots.len()];
    for _ in 0..PROPAGATION_SAMPLES {
        let z = DVector::<f64>::from_fn(m, |_, _| rng.sample(StandardNormal));
        let draw = &factor * z;
        let cs: Vec<f64> = (0..m).map(|k| c[k] + draw[k]).collect();
        let sampled = real_poly_roots(&cs);
        let assign = matching(&sampled, roots);
        for (s, &k) in sampled.iter().zip(&assign) {
            // E = iλ: Re E = −Im λ, Im E = Re λ.
            acc[k][0] += (s.im - roots[k].im).powi(2);
            acc[k][1] += (s.re - roots[k].re).powi(2);
        }
    }
    acc.iter().map(|a| [(a[0] / PROPAGATION_SAMPLES as f64).sqrt(), (a[1] / PROPAGATION_SAMPLES as f64).sqrt()]).collect()
}

struct Weighted<'a> {
    channels: &'a [Series],
    rel_t: Vec<f64>,
    dt: f64,
    sigmas: Vec<Vec<f64>>,
    weighted: bool,
}

struct ModelFit {
    /// Mode polynomial coefficients followed by (offset, amplitudes) per channel.
    x: Vec<f64>,
    order: usize,
    cov: DMatrix<f64>,
    chi2: f64,
    polished: bool,
}

impl Weighted<'_> {
    /// χ² with amplitudes projected out for a fixed set of modes; ranks grid seeds.
    fn projected_chi2(&self, modes: &[Mode], x: &[f64]) -> f64 {
        let nb = basis_len(modes);
        let mut basis = DMatrix::<f64>::zeros(self.rel_t.len(), nb);
        let mut row = Vec::with_capacity(nb);
        for (i, &t) in self.rel_t.iter().enumerate() {
            basis_row(modes, x, t, &mut row);
            for (j, v) in row.iter().enumerate() {
                basis[(i, j)] = *v;
            }
        }
        self.projected_with(&basis)
    }

    fn projected_with(&self, basis: &DMatrix<f64>) -> f64 {
        let mut total = 0.0;
        for (s, sigma) in self.channels.iter().zip(&self.sigmas) {
            let a = DMatrix::from_fn(basis.nrows(), basis.ncols(), |i, j| basis[(i, j)] / sigma[i]);
            let y = DVector::from_iterator(sigma.len(), s.values.iter().zip(sigma).map(|(v, e)| v / e));
            let Some(chol) = (a.transpose() * &a).cholesky() else {
                return f64::INFINITY;
            };
            let sol = chol.solve(&(a.transpose() * &y));
            total += (y - a * sol).norm_squared();
        }
        total
    }

    /// Offset column followed by the companion basis.
    fn basis(&self, c: &[f64]) -> DMatrix<f64> {
        let comp = companion_basis(c, self.dt, self.rel_t.len());
        let mut out = DMatrix::<f64>::from_element(self.rel_t.len(), c.len() + 1, 1.0);
        out.view_mut((0, 1), (self.rel_t.len(), c.len())).copy_from(&comp);
        out
    }

    fn amplitudes(&self, c: &[f64]) -> Vec<f64> {
        let basis = self.basis(c);
        let nb = basis.ncols();
        let mut out = Vec::with_capacity(nb * self.channels.len());
        for (s, sigma) in self.channels.iter().zip(&self.sigmas) {
            let a = DMatrix::from_fn(basis.nrows(), nb, |i, j| basis[(i, j)] / sigma[i]);
            let y = DVector::from_iterator(sigma.len(), s.values.iter().zip(sigma).map(|(v, e)| v / e));
            let svd = a.svd(true, true);
            let tol = 1e-13 * svd.singular_values.max();
            match svd.solve(&y, tol) {
                Ok(sol) => out.extend(sol.iter()),
                Err(_) => out.extend(std::iter::repeat_n(0.0, nb)),
            }
        }
        out
    }

    fn residuals(&self, order: usize, p: &[f64]) -> Vec<f64> {
        let basis = self.basis(&p[..order]);
        let nb = order + 1;
        let mut out = Vec::with_capacity(self.rel_t.len() * self.channels.len());
        for (c, (s, sigma)) in self.channels.iter().zip(&self.sigmas).enumerate() {
            let amps = &p[order + c * nb..order + (c + 1) * nb];
            for i in 0..self.rel_t.len() {
                let model: f64 = (0..nb).map(|j| basis[(i, j)] * amps[j]).sum();
                out.push((s.values[i] - model) / sigma[i]);
            }
        }
        out
    }

    fn fit(&self, c0: Vec<f64>, polish: bool) -> ModelFit {
        let order = c0.len();
        let mut x = c0.clone();
        x.extend(self.amplitudes(&c0));
        let mut chi2: f64 = self.residuals(order, &x).iter().map(|r| r * r).sum();
        let mut cov = DMatrix::from_element(order, order, f64::INFINITY);
        let mut polished = false;
        if polish {
            let dof = (self.rel_t.len() * self.channels.len()).saturating_sub(x.len()).max(1);
            let fit = levenberg_marquardt(|p: &[f64]| self.residuals(order, p), &x, 100);
            if fit.chi2.is_finite() && fit.params.iter().all(|v| v.is_finite()) && fit.chi2 <= chi2 {
                x = fit.params;
                chi2 = fit.chi2;
                polished = true;
                let scale = if self.weighted { 1.0 } else { chi2 / dof as f64 };
                cov = fit.covariance.view((0, 0), (order, order)) * scale;
            }
        }
        ModelFit { x, order, cov, chi2, polished }
    }
}

/// Fits s_c(t) = s_c,∞ + Σ_k A_c,k·e^{−iE_k t} jointly over all channels and
/// returns the E_k with standard errors.
///
/// The modes enter through the real coefficients of Π(λ − λ_k), λ = −iE, so
/// the fit passes smoothly between mirror pairs and purely imaginary modes.
pub fn extract_eigenvalues(channels: &[Series], model_order: usize, opts: &ExtractionOptions) -> Result<EigenvalueEstimate, ExtractionError> {
    let dt = validate(channels, model_order)?;
    let pencil = matrix_pencil(channels, model_order, opts)?;
    let (pencil_modes, pencil_x) = modes_from_poles(&pencil.poles, dt);

    let t0 = channels[0].times[0];
    let problem = {
        let rel_t: Vec<f64> = channels[0].times.iter().map(|t| t - t0).collect();
        let per_channel: Vec<(Vec<f64>, bool)> = channels
            .iter()
            .map(|s| match &s.std_errors {
                Some(e) => effective_sigmas(e),
                None => (vec![1.0; rel_t.len()], false),
            })
            .collect();
        Weighted {
            channels,
            dt,
            weighted: per_channel.iter().all(|(_, w)| *w),
            sigmas: per_channel.into_iter().map(|(s, _)| s).collect(),
            rel_t,
        }
    };

    // Exact low-rank data fixes the mode count; otherwise the requested order is fitted.
    let count = if pencil.saturated { model_order } else { mode_count(&pencil_modes) };
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if mode_count(&pencil_modes) == count {
        seeds.push(poly_from_roots(&roots_of_modes(&pencil_modes, &pencil_x)));
    }
    let span = problem.rel_t.last().copied().unwrap_or(dt).max(dt);
    if opts.polish && pencil.saturated {
        let rates = log_grid(0.5 / span, 0.5 / dt, 20);
        let freqs = log_grid(0.2 / span, 1.0 / dt, 20);
        for modes in structures(count) {
            let mut ranked: Vec<_> = grid_candidates(&modes, &rates, &freqs).into_iter().map(|x| (problem.projected_chi2(&modes, &x), x)).collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (_, x) in ranked.into_iter().take(GRID_SEEDS) {
                seeds.push(poly_from_roots(&roots_of_modes(&modes, &x)));
            }
        }
    }
    if seeds.is_empty() {
        return Err(ExtractionError::NoSignal);
    }

    let mut best: Option<ModelFit> = None;
    for c in seeds {
        let candidate = problem.fit(c, opts.polish);
        let key = |f: &ModelFit| (resolvable(&f.x[..f.order], dt, span), f.polished);
        let better = match &best {
            None => true,
            Some(b) => key(&candidate) > key(b) || (key(&candidate) == key(b) && candidate.chi2 < b.chi2),
        };
        if better {
            best = Some(candidate);
        }
    }
    let best = best.expect("at least one seed");

    let order = best.order;
    let nb = order + 1;
    let n_res = problem.rel_t.len() * channels.len();
    let unweighted: f64 = problem
        .residuals(order, &best.x)
        .chunks(problem.rel_t.len())
        .zip(&problem.sigmas)
        .map(|(r, sigma)| r.iter().zip(sigma).map(|(v, s)| (v * s).powi(2)).sum::<f64>())
        .sum();
    let offsets = (0..channels.len()).map(|c| best.x[order + c * nb]).collect();
    let coefficients = &best.x[..order];
    let roots = real_poly_roots(coefficients);
    let errors = propagate(coefficients, &best.cov, &roots);
    let mut modes_out: Vec<ModeEstimate> = roots
        .iter()
        .zip(errors)
        .map(|(l, e)| ModeEstimate { value: C64::new(-l.im, l.re), std_error: e })
        .collect();
    modes_out.sort_by(|a, b| a.value.re.total_cmp(&b.value.re).then(a.value.im.total_cmp(&b.value.im)));

    let mut order_reduction = Vec::new();
    if modes_out.len() < model_order {
        let sv = &pencil.singular_values;
        order_reduction.push(OrderReduction::RankDeficient {
            requested: model_order,
            rank: modes_out.len(),
            gap_ratio: sv[pencil.rank - 1] / sv.get(pencil.rank).copied().unwrap_or(0.0).max(f64::MIN_POSITIVE),
        });
    }
    let scale = modes_out.iter().map(|m| m.value.norm()).fold(0.0, f64::max);
    let mut pairs = Vec::new();
    let mut min_distance = f64::INFINITY;
    for i in 0..modes_out.len() {
        for j in i + 1..modes_out.len() {
            let d = (modes_out[i].value - modes_out[j].value).norm();
            if d <= opts.coalescence_tol * scale {
                pairs.push((i, j));
                min_distance = min_distance.min(d);
            }
        }
    }
    if !pairs.is_empty() {
        order_reduction.push(OrderReduction::Coalescence { pairs, min_distance });
    }

    Ok(EigenvalueEstimate {
        model_order: modes_out.len(),
        modes: modes_out,
        requested_order: model_order,
        offsets,
        residual_rms: (unweighted / n_res as f64).sqrt(),
        chi2: best.chi2,
        dof: n_res.saturating_sub(best.x.len()).max(1),
        singular_values: pencil.singular_values,
        order_reduction,
        polished: best.polished,
    })
}
