//! One function per subcommand: resolved config in, tables out.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lindblad_ep::dynamics::{evolve_master, mc_trajectories, Integrator};
use lindblad_ep::ep::{
    ep_trajectory_vs_alpha, locate_ep2, locate_ep2_scan, locate_ep3, trace_exceptional_lines, CoalescingPair, EpCandidate, EpError, EpKind,
    EpTolerances, Window,
};
use lindblad_ep::expsim::pipeline::{simulate_decay_calibration, simulate_dephasing_calibration};
use lindblad_ep::expsim::{calibrate_rate, run_figure_pipeline, CalibrationCurve, ObservableSet, PipelineConfig, Shots};
use lindblad_ep::lindblad::{DensityMatrix, Ket, Pauli, SystemParams};
use lindblad_ep::spectral::{eigenvalues_closed_form, track_branches};

use crate::config::*;
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Tables of one run plus the number of flagged (failed) rows among them.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Table>,
    pub failures: usize,
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn params(delta: f64, gamma: f64, alpha: f64) -> Result<SystemParams, CliError> {
    SystemParams::new(1.0, delta, gamma, alpha).map_err(|e| CliError::config(e.to_string()))
}

const BRANCH_COLUMNS: [&str; 6] = ["re_E1", "re_E2", "re_E3", "im_E1", "im_E2", "im_E3"];

fn branch_cells(e: &[C64; 3]) -> Vec<Cell> {
    e.iter().map(|z| Cell::Num(z.re)).chain(e.iter().map(|z| Cell::Num(z.im))).collect()
}

pub fn spectrum(c: &SpectrumConfig) -> Result<Report, CliError> {
    let sweep = c.gamma.values().into_iter().map(|g| params(c.delta, g, c.alpha)).collect::<Result<Vec<_>, _>>()?;
    let tracked = track_branches(&sweep).map_err(numerical)?;
    let mut columns = vec!["gamma_over_omega"];
    columns.extend(BRANCH_COLUMNS);
    let mut t = Table::new("", &columns);
    for (p, e) in sweep.iter().zip(&tracked.labeled) {
        let mut row = vec![Cell::Num(p.gamma())];
        row.extend(branch_cells(e));
        t.push(row);
    }
    for &k in &tracked.ambiguous_steps {
        t.notes.push(format!("branch labels ambiguous at gamma_over_omega = {}", crate::output::format_number(sweep[k].gamma())));
    }
    Ok(Report { tables: vec![t], failures: 0 })
}

pub fn surface(c: &SurfaceConfig) -> Result<Report, CliError> {
    let (xs, ys) = (c.x.values(), c.gamma.values());
    let n = xs.len() * ys.len();
    if n > c.max_points {
        return Err(CliError::config(format!(
            "surface grid has {} × {} = {n} points, above the cap of {}; reduce surface.x or surface.gamma resolution",
            xs.len(),
            ys.len(),
            c.max_points
        )));
    }
    let points: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect();
    let results: Vec<Option<[C64; 4]>> = points
        .par_iter()
        .map(|&(x, y)| {
            let (delta, alpha) = match c.axis {
                SurfaceAxis::Delta => (x, c.fixed),
                SurfaceAxis::Alpha => (c.fixed, x),
            };
            SystemParams::new(1.0, delta, y, alpha).ok().and_then(|p| eigenvalues_closed_form(&p).ok())
        })
        .collect();
    let mut t = Table::new("", &["x", "y", "branch", "re_E", "im_E"]);
    t.notes.push(match c.axis {
        SurfaceAxis::Delta => format!("x = delta_over_omega, y = gamma_over_omega, alpha = {}", crate::output::format_number(c.fixed)),
        SurfaceAxis::Alpha => format!("x = alpha, y = gamma_over_omega, delta_over_omega = {}", crate::output::format_number(c.fixed)),
    });
    t.notes.push("branches ordered by real part, then imaginary part, at each point".into());
    let mut failures = 0;
    for (&(x, y), r) in points.iter().zip(&results) {
        for b in 0..3 {
            let e = r.map(|e| e[b]).unwrap_or(C64::new(f64::NAN, f64::NAN));
            t.push(vec![x.into(), y.into(), (b + 1).into(), e.re.into(), e.im.into()]);
        }
        failures += usize::from(r.is_none());
    }
    Ok(Report { tables: vec![t], failures })
}

const EP_COLUMNS: [&str; 15] = [
    "alpha",
    "delta_over_omega",
    "gamma_over_omega",
    "order",
    "re_Estar",
    "im_Estar",
    "discriminant",
    "min_gap",
    "sv_min",
    "sv_next",
    "max_overlap",
    "rank1",
    "rank2",
    "rank3",
    "status",
];

fn candidate_row(alpha: f64, c: &EpCandidate) -> Vec<Cell> {
    let d = &c.diagnostics;
    vec![
        alpha.into(),
        c.params.delta().into(),
        c.params.gamma().into(),
        usize::from(c.order.as_u8()).into(),
        c.e_star.re.into(),
        c.e_star.im.into(),
        d.discriminant.into(),
        d.min_gap.into(),
        d.smallest_singular_values[0].into(),
        d.smallest_singular_values[1].into(),
        d.max_overlap.into(),
        d.ranks[0].into(),
        d.ranks[1].into(),
        d.ranks[2].into(),
        "ok".into(),
    ]
}

fn failed_row(alpha: f64, delta: f64, status: String) -> Vec<Cell> {
    let mut row: Vec<Cell> = vec![alpha.into(), delta.into()];
    row.extend((0..12).map(|_| Cell::Num(f64::NAN)));
    row.push(status.into());
    row
}

pub fn ep_locate(c: &EpLocateConfig) -> Result<Report, CliError> {
    let tols = EpTolerances::default();
    let mut t = Table::new("", &EP_COLUMNS);
    let mut failures = 0;
    let found = match c.kind {
        EpKindConfig::Ep2 => match c.gamma_bracket {
            Some([lo, hi]) => locate_ep2(c.alpha, c.delta, (lo, hi), &tols),
            None => locate_ep2_scan(c.alpha, c.delta, &tols),
        }
        .map(|x| vec![x]),
        EpKindConfig::Ep3 => locate_ep3(c.alpha, &tols).map(|p| vec![p.plus, p.minus]),
    };
    match found {
        Ok(cands) => cands.iter().for_each(|x| t.push(candidate_row(c.alpha, x))),
        Err(e) => {
            failures += 1;
            t.push(failed_row(c.alpha, c.delta, format!("failed: {e}")));
        }
    }
    Ok(Report { tables: vec![t], failures })
}

pub fn ep_trajectory(c: &EpTrajectoryConfig) -> Result<Report, CliError> {
    let kind = match c.kind {
        EpKindConfig::Ep2 => EpKind::Ep2AtZeroDetuning,
        EpKindConfig::Ep3 => EpKind::Ep3,
    };
    let points = ep_trajectory_vs_alpha(kind, &c.alphas.values(), c.exclusion_band, &EpTolerances::default());
    let mut t = Table::new("", &EP_COLUMNS);
    let mut failures = 0;
    for p in &points {
        match &p.result {
            Ok(cands) => cands.iter().for_each(|x| t.push(candidate_row(p.alpha, x))),
            Err(e @ EpError::Excluded { .. }) => t.push(failed_row(p.alpha, f64::NAN, format!("excluded: {e}"))),
            Err(e) => {
                failures += 1;
                t.push(failed_row(p.alpha, f64::NAN, format!("failed: {e}")));
            }
        }
    }
    Ok(Report { tables: vec![t], failures })
}

/// Mean of the closest pair of nonzero-branch eigenvalues, or of all three.
fn degenerate_value(e: &[C64; 4], order: usize) -> C64 {
    if order == 3 {
        return (e[0] + e[1] + e[2]) / 3.0;
    }
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let &(i, j) = pairs.iter().min_by(|a, b| (e[a.0] - e[a.1]).norm().total_cmp(&(e[b.0] - e[b.1]).norm())).expect("three pairs");
    (e[i] + e[j]) / 2.0
}

pub fn ep_trace(c: &EpTraceConfig) -> Result<Report, CliError> {
    let window = Window { delta: (c.delta_range[0], c.delta_range[1]), gamma: (c.gamma_range[0], c.gamma_range[1]), nodes: (c.nodes, c.nodes) };
    let trace = trace_exceptional_lines(c.alpha, &window, &EpTolerances::default()).map_err(numerical)?;
    let mut t = Table::new(
        "",
        &["alpha", "delta_over_omega", "gamma_over_omega", "order", "re_Estar", "im_Estar", "line", "vertex", "pair", "ep3_junction"],
    );
    let mut failures = 0;
    for (l, line) in trace.lines.iter().enumerate() {
        let last = line.points.len().saturating_sub(1);
        for (v, &[delta, gamma]) in line.points.iter().enumerate() {
            let junction = (v == 0 && line.start_ep3.is_some()) || (v == last && line.end_ep3.is_some());
            let order = if junction { 3 } else { 2 };
            let e = match params(delta, gamma, c.alpha).ok().and_then(|p| eigenvalues_closed_form(&p).ok()) {
                Some(e) => degenerate_value(&e, order),
                None => {
                    failures += 1;
                    C64::new(f64::NAN, f64::NAN)
                }
            };
            let pair = match line.pair {
                CoalescingPair::LeastDamped => "least_damped",
                CoalescingPair::MostDamped => "most_damped",
            };
            t.push(vec![
                c.alpha.into(),
                delta.into(),
                gamma.into(),
                order.into(),
                e.re.into(),
                e.im.into(),
                (l + 1).into(),
                v.into(),
                pair.into(),
                junction.into(),
            ]);
        }
    }
    if trace.lines.is_empty() {
        t.notes.push("no exceptional line in the window: 0 rows".into());
    } else {
        t.notes.push(format!("{} lines, {} third-order points in the window", trace.lines.len(), trace.ep3.len()));
    }
    Ok(Report { tables: vec![t], failures })
}

fn initial_state(s: &InitialState) -> Result<DensityMatrix, CliError> {
    match s {
        InitialState::Named(NamedState::Ground) => Ok(DensityMatrix::ground()),
        InitialState::Named(NamedState::Excited) => Ok(DensityMatrix::excited()),
        InitialState::Bloch(r) => DensityMatrix::from_bloch(*r).map_err(|e| CliError::config(format!("evolve.initial: {e}"))),
    }
}

pub fn evolve(c: &EvolveConfig) -> Result<Report, CliError> {
    let p = params(c.delta, c.gamma, c.alpha)?;
    let integrator = match c.integrator {
        IntegratorChoice::Rk4 => Integrator::default(),
        IntegratorChoice::DormandPrince => Integrator::DormandPrince { rtol: 1e-10, atol: 1e-12, min_step: 1e-12 },
    };
    let traj = evolve_master(&p, &initial_state(&c.initial)?, &c.times.values(), integrator).map_err(numerical)?;
    let mut t = Table::new("", &["t", "rho_ee", "re_rho_eg", "im_rho_eg", "sigma_x", "sigma_y", "sigma_z"]);
    t.notes.push("t in units of 1/omega".into());
    t.notes.push(format!("renormalizations: {}, max trace drift: {}", traj.renormalizations, crate::output::format_number(traj.max_trace_drift)));
    for (time, s) in traj.times.iter().zip(&traj.states) {
        let [x, y, z] = s.bloch();
        t.push(vec![(*time).into(), s.ee().into(), s.eg().re.into(), s.eg().im.into(), x.into(), y.into(), z.into()]);
    }
    Ok(Report { tables: vec![t], failures: 0 })
}

pub fn trajectories(c: &TrajectoriesConfig, seed: u64) -> Result<Report, CliError> {
    let p = params(c.delta, c.gamma, c.alpha)?;
    let psi0 = match c.initial {
        NamedState::Ground => Ket::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        NamedState::Excited => Ket::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
    };
    let mc = mc_trajectories(&p, &psi0, &c.times.values(), c.n_traj, seed).map_err(numerical)?;
    let mut t = Table::new("", &["t", "pop_e", "pop_e_se", "sigma_x", "sigma_x_se", "sigma_y", "sigma_y_se", "sigma_z", "sigma_z_se"]);
    t.notes.push("t in units of 1/omega".into());
    t.notes.push(format!(
        "mean jumps per trajectory: decay {} ± {}, dephasing {} ± {}",
        crate::output::format_number(mc.mean_jumps[0]),
        crate::output::format_number(mc.jump_std_errors[0]),
        crate::output::format_number(mc.mean_jumps[1]),
        crate::output::format_number(mc.jump_std_errors[1]),
    ));
    for (k, (time, m)) in mc.times.iter().zip(&mc.mean).enumerate() {
        let se = mc.std_errors[k];
        let expect = |op: Pauli| (op.matrix() * m).trace().re;
        t.push(vec![
            (*time).into(),
            m[(0, 0)].re.into(),
            se[0].into(),
            expect(Pauli::X).into(),
            se[1].into(),
            expect(Pauli::Y).into(),
            se[2].into(),
            expect(Pauli::Z).into(),
            se[3].into(),
        ]);
    }
    Ok(Report { tables: vec![t], failures: 0 })
}

pub fn expsim(c: &ExpsimConfig, seed: u64) -> Result<Report, CliError> {
    let mut cfg = PipelineConfig::new(c.alphas.values(), c.gamma.values(), c.delta, seed);
    cfg.shots = match c.shots {
        ShotSetting::Count(n) => Shots::Finite(n),
        ShotSetting::Named(_) => Shots::Analytic,
    };
    cfg.dt = c.dt;
    cfg.n_times = c.n_times;
    cfg.observables = match c.observables {
        ObservableChoice::SigmaZ => ObservableSet::SigmaZ,
        ObservableChoice::Xyz => ObservableSet::Xyz,
    };
    cfg.model_order = c.model_order;
    let out = run_figure_pipeline(&cfg).map_err(numerical)?;

    let mut exp = Table::new(
        "",
        &[
            "alpha",
            "gamma_over_omega",
            "branch",
            "re_E",
            "im_E",
            "se_re_E",
            "se_im_E",
            "re_theory",
            "im_theory",
            "covers_3sigma",
            "order_reduced",
            "failed",
            "message",
        ],
    );
    let mut failed_points = std::collections::BTreeSet::new();
    for r in &out.experiment {
        if r.flags.failed {
            failed_points.insert((r.alpha.to_bits(), r.gamma_over_omega.to_bits()));
        }
        exp.push(vec![
            r.alpha.into(),
            r.gamma_over_omega.into(),
            r.branch.into(),
            r.value.re.into(),
            r.value.im.into(),
            r.std_error[0].into(),
            r.std_error[1].into(),
            r.theory.re.into(),
            r.theory.im.into(),
            r.covers_theory.into(),
            r.flags.order_reduced.into(),
            r.flags.failed.into(),
            r.message.clone().unwrap_or_default().into(),
        ]);
    }
    exp.notes.push(format!("model order {}, {} samples at dt = {} / omega", cfg.model_order(), cfg.n_times, crate::output::format_number(cfg.dt)));
    exp.notes.push(format!("3-sigma coverage of theory: {}", crate::output::format_number(out.coverage())));

    let mut columns = vec!["alpha", "gamma_over_omega"];
    columns.extend(BRANCH_COLUMNS);
    let mut theory = Table::new("theory", &columns);
    for r in &out.theory {
        let mut row = vec![Cell::Num(r.alpha), Cell::Num(r.gamma_over_omega)];
        row.extend(branch_cells(&r.branches));
        theory.push(row);
    }
    Ok(Report { tables: vec![exp, theory], failures: failed_points.len() })
}

pub fn calibrate(c: &CalibrateConfig, seed: Option<u64>) -> Result<Report, CliError> {
    let rng_for = |k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.expect("seed checked for fit modes"));
        rng.set_stream(k as u64);
        rng
    };
    match c {
        CalibrateConfig::Curve { curve, settings } => {
            let curve = match curve {
                CurveChoice::Decay => CalibrationCurve::decay_vs_power(),
                CurveChoice::Dephasing => CalibrationCurve::dephasing_vs_vpp(),
            };
            let mut t = Table::new("", &["x", "rate", "clamped"]);
            t.notes.push(format!("x in {}, rate = a x^2 + b x + c with a = {}, b = {}, c = {}", curve.input_unit, curve.a, curve.b, curve.c));
            for x in settings.values() {
                let r = calibrate_rate(&curve, x).map_err(|e| CliError::config(format!("calibrate.settings: {e}")))?;
                t.push(vec![x.into(), r.rate.into(), r.clamped.into()]);
            }
            Ok(Report { tables: vec![t], failures: 0 })
        }
        CalibrateConfig::DecayFit { rate, shots, times, repeats } => {
            let times = times.values();
            let fits: Vec<_> = (0..*repeats).into_par_iter().map(|k| simulate_decay_calibration(*rate, &times, *shots, &mut rng_for(k))).collect();
            let mut t = Table::new("", &["repeat", "gamma0", "se_gamma0", "amplitude", "chi2", "status"]);
            let mut failures = 0;
            for (k, f) in fits.iter().enumerate() {
                match f {
                    Ok(f) => t.push(vec![k.into(), f.gamma0.into(), f.std_error.into(), f.amplitude.into(), f.chi2.into(), "ok".into()]),
                    Err(e) => {
                        failures += 1;
                        t.push(vec![k.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), format!("failed: {e}").into()]);
                    }
                }
            }
            Ok(Report { tables: vec![t], failures })
        }
        CalibrateConfig::DephasingFit { rate, omega, shots, times, repeats } => {
            let times = times.values();
            let fits: Vec<_> =
                (0..*repeats).into_par_iter().map(|k| simulate_dephasing_calibration(*rate, *omega, &times, *shots, &mut rng_for(k))).collect();
            let mut t = Table::new("", &["repeat", "gamma_phi", "se_gamma_phi", "chi2", "flat", "status"]);
            let mut failures = 0;
            for (k, f) in fits.iter().enumerate() {
                match f {
                    Ok(f) => t.push(vec![k.into(), f.gamma_phi.into(), f.std_error.into(), f.chi2.into(), f.flat.into(), "ok".into()]),
                    Err(e) => {
                        failures += 1;
                        t.push(vec![k.into(), f64::NAN.into(), f64::NAN.into(), f64::NAN.into(), Cell::Int(0), format!("failed: {e}").into()]);
                    }
                }
            }
            Ok(Report { tables: vec![t], failures })
        }
    }
}
