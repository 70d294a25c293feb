//! Weighted least-squares fits for the calibration measurements.

use log::warn;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::dynamics::{evolve_master, DynamicsError, Integrator};
use crate::lindblad::{DensityMatrix, ParamError, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error("only {usable} positive estimates available for the log-linear seed (need 3)")]
    TooFewUsable { usable: usize },
    #[error("times, estimates and errors differ in length ({times}, {values}, {errors})")]
    LengthMismatch { times: usize, values: usize, errors: usize },
    #[error("input contains non-finite values")]
    NonFinite,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Standard errors with zeros replaced by the smallest positive error; all
/// ones when no error is positive (unweighted fit).
pub(crate) fn effective_sigmas(errors: &[f64]) -> (Vec<f64>, bool) {
    let floor = errors.iter().cloned().filter(|&e| e > 0.0 && e.is_finite()).fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return (vec![1.0; errors.len()], false);
    }
    (errors.iter().map(|&e| if e > 0.0 && e.is_finite() { e } else { floor }).collect(), true)
}

pub(crate) struct LmResult {
    pub params: Vec<f64>,
    pub chi2: f64,
    /// (JᵀJ)⁻¹ of the weighted residuals at the solution.
    pub covariance: DMatrix<f64>,
}

fn jacobian<F: Fn(&[f64]) -> Vec<f64>>(f: &F, x: &[f64], n_res: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(n_res, x.len());
    for k in 0..x.len() {
        let h = 1e-7 * x[k].abs().max(1e-3);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let (rp, rm) = (f(&xp), f(&xm));
        for i in 0..n_res {
            j[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    j
}

fn chi2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg–Marquardt on weighted residuals with a central-difference
/// Jacobian.
pub(crate) fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64], max_iter: usize) -> LmResult {
    let mut x = x0.to_vec();
    let mut r = f(&x);
    let n_res = r.len();
    let mut c = chi2(&r);
    let mut lambda = 1e-3;
    for _ in 0..max_iter {
        let j = jacobian(&f, &x, n_res);
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * DVector::from_vec(r.clone());
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for k in 0..x.len() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.clone().lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = f(&trial);
            let ct = chi2(&rt);
            if ct.is_finite() && ct <= c {
                let rel = (c - ct) / c.max(1e-300);
                let small_step = step.iter().zip(&x).all(|(s, v)| s.abs() <= 1e-14 * v.abs().max(1e-10));
                x = trial;
                r = rt;
                c = ct;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !(rel < 1e-15 && small_step);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let j = jacobian(&f, &x, n_res);
    let jtj = j.transpose() * &j;
    let covariance = jtj.clone().pseudo_inverse(1e-14 * jtj.norm().max(1e-300)).unwrap_or_else(|_| DMatrix::from_element(x.len(), x.len(), f64::INFINITY));
    LmResult { params: x, chi2: c, covariance }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub gamma0: f64,
    pub std_error: f64,
    pub amplitude: f64,
    pub amplitude_std_error: f64,
    pub chi2: f64,
    /// Non-positive estimates left out of the log-linear seed.
    pub excluded_from_seed: usize,
}

fn check_lengths(times: &[f64], values: &[f64], errors: &[f64], min: usize) -> Result<(), FitError> {
    if times.len() != values.len() || times.len() != errors.len() {
        return Err(FitError::LengthMismatch { times: times.len(), values: values.len(), errors: errors.len() });
    }
    if times.len() < min {
        return Err(FitError::TooFewPoints { required: min, got: times.len() });
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    Ok(())
}

/// Weighted fit of P(t) = A·e^{−γ₀t}: weighted log-linear regression for the
/// seed, then Gauss–Newton refinement on the untransformed data.
pub fn fit_exponential_decay(times: &[f64], survival: &[f64], errors: &[f64]) -> Result<DecayFit, FitError> {
    check_lengths(times, survival, errors, 4)?;
    let (sigma, _) = effective_sigmas(errors);
    let usable: Vec<usize> = (0..times.len()).filter(|&i| survival[i] > 0.0).collect();
    let excluded = times.len() - usable.len();
    if excluded > 0 {
        warn!("{excluded} non-positive survival estimates excluded from the log-linear seed");
    }
    if usable.len() < 3 {
        return Err(FitError::TooFewUsable { usable: usable.len() });
    }
    // ln P = ln A − γ₀ t with σ_ln = σ / P.
    let (mut sw, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &usable {
        let w = (survival[i] / sigma[i]).powi(2);
        let y = survival[i].ln();
        sw += w;
        st += w * times[i];
        sy += w * y;
        stt += w * times[i] * times[i];
        sty += w * times[i] * y;
    }
    let det = sw * stt - st * st;
    let slope = if det.abs() > 0.0 { (sw * sty - st * sy) / det } else { 0.0 };
    let intercept = (sy - slope * st) / sw;
    let seed = [intercept.exp(), -slope];

    let residuals = |x: &[f64]| -> Vec<f64> {
        (0..times.len()).map(|i| (survival[i] - x[0] * (-x[1] * times[i]).exp()) / sigma[i]).collect()
    };
    let fit = levenberg_marquardt(residuals, &seed, 50);
    Ok(DecayFit {
        gamma0: fit.params[1],
        std_error: fit.covariance[(1, 1)].sqrt(),
        amplitude: fit.params[0],
        amplitude_std_error: fit.covariance[(0, 0)].sqrt(),
        chi2: fit.chi2,
        excluded_from_seed: excluded,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DephasingFit {
    pub gamma_phi: f64,
    pub std_error: f64,
    pub chi2: f64,
    /// The objective is nearly flat around the minimum; the interval is wide.
    pub flat: bool,
}

/// Relative curvature below which the objective counts as flat.
const FLAT_CURVATURE: f64 = 1e-6;

/// Resonant Rabi model with dephasing only, ρ(0) = |g⟩⟨g|.
pub fn dephasing_model(times: &[f64], omega: f64, gamma_phi: f64) -> Result<Vec<f64>, FitError> {
    let p = SystemParams::new(omega, 0.0, gamma_phi.max(0.0), 0.0)?;
    let traj = evolve_master(&p, &DensityMatrix::ground(), times, Integrator::default())?;
    Ok(traj.states.iter().map(|s| s.ee()).collect())
}

/// One-parameter weighted least squares over γ_φ with the model curve from the
/// master equation: a logarithmic scan brackets the minimum, golden-section
/// search refines it, and the standard error is √(2/χ″).
pub fn fit_dephasing_rabi(times: &[f64], populations: &[f64], errors: &[f64], omega: f64) -> Result<DephasingFit, FitError> {
    check_lengths(times, populations, errors, 4)?;
    let (sigma, weighted) = effective_sigmas(errors);
    let objective = |g: f64| -> Result<f64, FitError> {
        let model = dephasing_model(times, omega, g)?;
        Ok(model.iter().zip(populations).zip(&sigma).map(|((m, y), s)| ((y - m) / s).powi(2)).sum())
    };

    let mut grid = vec![0.0];
    grid.extend((0..=60).map(|k| omega * 1e-3 * 10f64.powf(k as f64 * 5.0 / 60.0)));
    let values = grid.iter().map(|&g| objective(g)).collect::<Result<Vec<_>, _>>()?;
    let best = (0..grid.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(grid.len() - 1)];

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = objective(x1)?;
    let mut f2 = objective(x2)?;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.abs().max(omega * 1e-9) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let (mut g_hat, mut c_hat) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let f0 = values[0];
    if f0 <= c_hat {
        g_hat = 0.0;
        c_hat = f0;
    }

    let h = 1e-3 * g_hat.max(0.05 * omega);
    let curvature = if g_hat >= h {
        (objective(g_hat + h)? - 2.0 * c_hat + objective(g_hat - h)?) / (h * h)
    } else {
        (objective(g_hat + 2.0 * h)? - 2.0 * objective(g_hat + h)? + objective(g_hat)?) / (h * h)
    };
    let n = times.len() as f64;
    let mut std_error = if curvature > 0.0 { (2.0 / curvature).sqrt() } else { f64::INFINITY };
    if !weighted {
        std_error *= (c_hat / (n - 1.0).max(1.0)).sqrt();
    }
    let total_weight: f64 = sigma.iter().map(|s| s.powi(-2)).sum();
    let flat = !(curvature * omega * omega > FLAT_CURVATURE * total_weight);
    if flat {
        warn!("dephasing objective is flat near gamma_phi = {g_hat:.4}; the interval is wide");
    }
    Ok(DephasingFit { gamma_phi: g_hat, std_error, chi2: c_hat, flat })
}
