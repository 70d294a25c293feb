//! Small dense complex linear algebra: a shifted-QR eigenvalue solver for
//! general complex matrices plus singular-value helpers.

use nalgebra::{DMatrix, Dim, Matrix, RawStorage};
use num_complex::Complex64;
use thiserror::Error;

type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrError {
    #[error("QR iteration did not converge after {iterations} sweeps (active window {lo}..={hi}, subdiagonal {subdiag:.3e})")]
    NoConvergence { iterations: usize, lo: usize, hi: usize, subdiag: f64 },
    #[error("matrix is not square ({rows}×{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Iteration budget per eigenvalue.
const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Complex Givens rotation G = [[c, s], [−s̄, c]] with G·(x, y)ᵀ = (r, 0)ᵀ.
fn givens(x: C64, y: C64) -> (f64, C64) {
    let ax = x.norm();
    let ay = y.norm();
    if ay == 0.0 {
        return (1.0, C64::new(0.0, 0.0));
    }
    if ax == 0.0 {
        return (0.0, C64::new(1.0, 0.0));
    }
    let rho = ax.hypot(ay);
    (ax / rho, (x / ax) * y.conj() / rho)
}

/// Eigenvalues of a 2×2 block, computed without cancellation in the larger root.
fn eig2(a: C64, b: C64, c: C64, d: C64) -> (C64, C64) {
    let half_tr = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (half_tr * half_tr - det).sqrt();
    let big = if (half_tr + disc).norm() >= (half_tr - disc).norm() { half_tr + disc } else { half_tr - disc };
    if big.norm() == 0.0 {
        return (big, big);
    }
    (big, det / big)
}

/// All eigenvalues of a square complex matrix by Hessenberg reduction and
/// single-shift QR sweeps with Wilkinson shifts and deflation.
///
/// Values are returned in deflation order (bottom of the Hessenberg matrix first).
pub fn eigenvalues_qr(a: &DMatrix<C64>) -> Result<Vec<C64>, QrError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(QrError::NotSquare { rows: n, cols: a.ncols() });
    }
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(QrError::NonFinite);
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let mut h = a.clone().hessenberg().h();
    let norm = h.norm().max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut hi = n - 1;
    let mut sweeps = 0usize;
    let mut total = 0usize;

    loop {
        if hi == 0 {
            out[0] = h[(0, 0)];
            break;
        }
        // Locate the start of the unreduced block ending at `hi`.
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let scale = if diag == 0.0 { norm } else { diag };
            if sub <= eps * scale {
                h[(lo, lo - 1)] = C64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            out[hi] = h[(hi, hi)];
            hi -= 1;
            sweeps = 0;
            continue;
        }
        if lo + 1 == hi {
            let (e1, e2) = eig2(h[(lo, lo)], h[(lo, hi)], h[(hi, lo)], h[(hi, hi)]);
            out[hi] = e1;
            out[lo] = e2;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            sweeps = 0;
            continue;
        }
        sweeps += 1;
        total += 1;
        if sweeps > MAX_SWEEPS_PER_EIGENVALUE || total > MAX_SWEEPS_PER_EIGENVALUE * n {
            return Err(QrError::NoConvergence { iterations: total, lo, hi, subdiag: h[(hi, hi - 1)].norm() });
        }

        let (e1, e2) = eig2(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
        let corner = h[(hi, hi)];
        let mut shift = if (e1 - corner).norm() <= (e2 - corner).norm() { e1 } else { e2 };
        if sweeps % 11 == 10 {
            // Exceptional shift to break cycles.
            shift = corner + C64::new(1.5 * h[(hi, hi - 1)].norm(), 0.5 * h[(hi, hi - 1)].norm());
        }

        // Implicit single-shift bulge chase on rows/columns lo..=hi.
        let mut x = h[(lo, lo)] - shift;
        let mut y = h[(lo + 1, lo)];
        for k in lo..hi {
            let (c, s) = givens(x, y);
            let col_start = if k > lo { k - 1 } else { lo };
            for j in col_start..=hi {
                let h1 = h[(k, j)];
                let h2 = h[(k + 1, j)];
                h[(k, j)] = h1 * c + s * h2;
                h[(k + 1, j)] = -s.conj() * h1 + h2 * c;
            }
            let row_end = (k + 2).min(hi);
            for i in lo..=row_end {
                let h1 = h[(i, k)];
                let h2 = h[(i, k + 1)];
                h[(i, k)] = h1 * c + h2 * s.conj();
                h[(i, k + 1)] = -h1 * s + h2 * c;
            }
            if k + 1 < hi {
                x = h[(k + 1, k)];
                y = h[(k + 2, k)];
            }
        }
    }
    Ok(out)
}

/// Singular values in descending order and the matching right singular vectors
/// (as columns).
pub fn svd_desc<R: Dim, Cc: Dim, S: RawStorage<C64, R, Cc>>(m: &Matrix<C64, R, Cc, S>) -> (Vec<f64>, DMatrix<C64>) {
    let dm = DMatrix::from_iterator(m.nrows(), m.ncols(), m.iter().cloned());
    let svd = dm.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(vt.ncols(), idx.len());
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..vt.ncols() {
            v[(r, col)] = vt[(i, r)].conj();
        }
    }
    (values, v)
}

/// Singular values only, descending.
pub fn singular_values<R: Dim, Cc: Dim, S: RawStorage<C64, R, Cc>>(m: &Matrix<C64, R, Cc, S>) -> Vec<f64> {
    let dm = DMatrix::from_iterator(m.nrows(), m.ncols(), m.iter().cloned());
    let mut s: Vec<f64> = dm.singular_values().iter().cloned().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Number of singular values strictly above `threshold`.
pub fn numerical_rank<R: Dim, Cc: Dim, S: RawStorage<C64, R, Cc>>(m: &Matrix<C64, R, Cc, S>, threshold: f64) -> usize {
    singular_values(m).iter().filter(|&&s| s > threshold).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn diagonal_matrix() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0), c(0.0, 0.0)]));
        let ev = sorted(eigenvalues_qr(&d).unwrap());
        assert_eq!(ev, vec![c(-3.0, 0.0), c(0.0, 0.0), c(0.0, 2.0), c(1.0, 0.0)]);
    }

    #[test]
    fn companion_matrix_roots() {
        // (z − 1)(z − 2i)(z + 3)(z − 0.5 + 0.5i)
        let roots = [c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 0.0), c(0.5, -0.5)];
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in roots {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, &a) in coeffs.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            coeffs = next;
        }
        let n = roots.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m[(0, j)] = -coeffs[j + 1];
        }
        for i in 1..n {
            m[(i, i - 1)] = c(1.0, 0.0);
        }
        let ev = eigenvalues_qr(&m).unwrap();
        for r in roots {
            let best = ev.iter().map(|e| (e - r).norm()).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-12, "root {r} missed by {best}");
        }
    }

    #[test]
    fn jordan_block_converges() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 1)] = c(1.0, 0.0);
        m[(2, 2)] = c(1.0, 0.0);
        m[(3, 3)] = c(2.0, 0.0);
        let ev = sorted(eigenvalues_qr(&m).unwrap());
        assert!(ev[0].norm() < 1e-12 && ev[1].norm() < 1e-12);
        assert!((ev[2] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((ev[3] - c(2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_square_and_nan() {
        assert!(matches!(eigenvalues_qr(&DMatrix::zeros(2, 3)), Err(QrError::NotSquare { .. })));
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = c(f64::NAN, 0.0);
        assert_eq!(eigenvalues_qr(&m), Err(QrError::NonFinite));
    }

    #[test]
    fn svd_ordering_and_rank() {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.5, 0.0), c(0.0, 3.0), c(0.0, 0.0)]));
        let (s, v) = svd_desc(&d);
        assert!((s[0] - 3.0).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15 && s[2] < 1e-15);
        assert!((v[(2, 2)].norm() - 1.0).abs() < 1e-15);
        assert_eq!(numerical_rank(&d, 1e-12), 2);
    }
}
