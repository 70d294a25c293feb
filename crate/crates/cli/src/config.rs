//! Run configuration: a TOML file with one table per command. Frequencies are
//! dimensionless (in units of Ω) unless given through the `_khz` variant of a
//! field, which is divided by `omega_khz` (default 40 kHz).

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_OMEGA_KHZ: f64 = 40.0;
/// Largest (x, y) grid `surface` evaluates in one run.
pub const SURFACE_POINT_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Linspace { start: f64, stop: f64, n: usize },
    Values(Vec<f64>),
}

impl Grid {
    pub fn linspace(start: f64, stop: f64, n: usize) -> Self {
        Grid::Linspace { start, stop, n }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Linspace { start, n: 1, .. } => vec![*start],
            Grid::Linspace { start, stop, n } => (0..*n).map(|k| start + (stop - start) * k as f64 / (*n - 1) as f64).collect(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Values(v) => v.len(),
            Grid::Linspace { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scaled(&self, s: f64) -> Grid {
        match self {
            Grid::Values(v) => Grid::Values(v.iter().map(|x| x / s).collect()),
            Grid::Linspace { start, stop, n } => Grid::Linspace { start: start / s, stop: stop / s, n: *n },
        }
    }

    fn check(&self, field: &str) -> Result<(), CliError> {
        if self.is_empty() {
            return Err(CliError::config(format!("{field}: range is empty")));
        }
        if let Grid::Linspace { start, stop, .. } = self {
            if !start.is_finite() || !stop.is_finite() {
                return Err(CliError::config(format!("{field}: range ends must be finite")));
            }
        }
        if self.values().iter().any(|x| !x.is_finite()) {
            return Err(CliError::config(format!("{field}: values must be finite")));
        }
        Ok(())
    }
}

/// Resolves a `name` / `name_khz` field pair to units of Ω.
struct Units {
    omega_khz: f64,
}

impl Units {
    fn scalar(&self, field: &str, plain: Option<f64>, khz: Option<f64>, default: f64) -> Result<f64, CliError> {
        let v = match (plain, khz) {
            (Some(_), Some(_)) => return Err(CliError::config(format!("{field} and {field}_khz are mutually exclusive"))),
            (Some(v), None) => v,
            (None, Some(v)) => v / self.omega_khz,
            (None, None) => default,
        };
        if !v.is_finite() {
            return Err(CliError::config(format!("{field}: must be finite")));
        }
        Ok(v)
    }

    fn grid(&self, field: &str, plain: Option<Grid>, khz: Option<Grid>, default: Grid) -> Result<Grid, CliError> {
        let g = match (plain, khz) {
            (Some(_), Some(_)) => return Err(CliError::config(format!("{field} and {field}_khz are mutually exclusive"))),
            (Some(g), None) => g,
            (None, Some(g)) => g.scaled(self.omega_khz),
            (None, None) => default,
        };
        g.check(field)?;
        Ok(g)
    }
}

fn check_alpha(field: &str, a: f64) -> Result<f64, CliError> {
    if (0.0..=1.0).contains(&a) {
        Ok(a)
    } else {
        Err(CliError::config(format!("{field}: alpha must lie in [0, 1], got {a}")))
    }
}

fn check_alphas(field: &str, g: &Grid) -> Result<(), CliError> {
    g.values().iter().try_for_each(|&a| check_alpha(field, a).map(|_| ()))
}

fn check_nonneg(field: &str, g: &Grid) -> Result<(), CliError> {
    match g.values().iter().find(|&&x| x < 0.0) {
        Some(x) => Err(CliError::config(format!("{field}: must be non-negative, got {x}"))),
        None => Ok(()),
    }
}

fn check_increasing(field: &str, g: &Grid) -> Result<(), CliError> {
    let v = g.values();
    if v.windows(2).any(|w| w[1] <= w[0]) || v[0] < 0.0 {
        return Err(CliError::config(format!("{field}: times must be non-negative and strictly increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub omega_khz: Option<f64>,
    pub spectrum: Option<SpectrumFile>,
    pub surface: Option<SurfaceFile>,
    pub ep: Option<EpFile>,
    pub evolve: Option<EvolveFile>,
    pub trajectories: Option<EvolveFile>,
    pub expsim: Option<ExpsimFile>,
    pub calibrate: Option<CalibrateFile>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string().trim_end().to_string()))
    }

    fn units(&self) -> Result<Units, CliError> {
        let omega_khz = self.omega_khz.unwrap_or(DEFAULT_OMEGA_KHZ);
        if !(omega_khz > 0.0 && omega_khz.is_finite()) {
            return Err(CliError::config(format!("omega_khz: must be positive, got {omega_khz}")));
        }
        Ok(Units { omega_khz })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumFile {
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_khz: Option<f64>,
    pub gamma: Option<Grid>,
    pub gamma_khz: Option<Grid>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumConfig {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: Grid,
}

impl SpectrumConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let s = file.spectrum.clone().unwrap_or_default();
        let gamma = u.grid("spectrum.gamma", s.gamma, s.gamma_khz, Grid::linspace(0.0, 8.0, 81))?;
        check_nonneg("spectrum.gamma", &gamma)?;
        Ok(SpectrumConfig {
            alpha: check_alpha("spectrum.alpha", s.alpha.unwrap_or(0.0))?,
            delta: u.scalar("spectrum.delta", s.delta, s.delta_khz, 0.0)?,
            gamma,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceAxis {
    Delta,
    Alpha,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    pub axis: Option<SurfaceAxis>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_khz: Option<f64>,
    pub x: Option<Grid>,
    pub x_khz: Option<Grid>,
    pub gamma: Option<Grid>,
    pub gamma_khz: Option<Grid>,
    pub max_points: Option<usize>,
}

/// x is Δ/Ω at fixed α, or α at fixed Δ/Ω.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceConfig {
    pub axis: SurfaceAxis,
    pub fixed: f64,
    pub x: Grid,
    pub gamma: Grid,
    pub max_points: usize,
}

impl SurfaceConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let s = file.surface.clone().unwrap_or_default();
        let axis = s.axis.unwrap_or(SurfaceAxis::Delta);
        let (fixed, x) = match axis {
            SurfaceAxis::Delta => {
                if s.delta.is_some() || s.delta_khz.is_some() {
                    return Err(CliError::config("surface.delta: not allowed when axis = \"delta\" (Δ is the x axis)"));
                }
                let x = u.grid("surface.x", s.x, s.x_khz, Grid::linspace(-1.0, 1.0, 101))?;
                (check_alpha("surface.alpha", s.alpha.unwrap_or(0.0))?, x)
            }
            SurfaceAxis::Alpha => {
                if s.alpha.is_some() {
                    return Err(CliError::config("surface.alpha: not allowed when axis = \"alpha\" (α is the x axis)"));
                }
                if s.x_khz.is_some() {
                    return Err(CliError::config("surface.x_khz: α is dimensionless"));
                }
                let x = s.x.unwrap_or(Grid::linspace(0.0, 1.0, 101));
                x.check("surface.x")?;
                check_alphas("surface.x", &x)?;
                (u.scalar("surface.delta", s.delta, s.delta_khz, 0.0)?, x)
            }
        };
        let gamma = u.grid("surface.gamma", s.gamma, s.gamma_khz, Grid::linspace(2.0, 6.0, 101))?;
        check_nonneg("surface.gamma", &gamma)?;
        Ok(SurfaceConfig { axis, fixed, x, gamma, max_points: s.max_points.unwrap_or(SURFACE_POINT_CAP) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpKindConfig {
    Ep2,
    Ep3,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpFile {
    pub kind: Option<EpKindConfig>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_khz: Option<f64>,
    pub gamma_bracket: Option<[f64; 2]>,
    pub gamma_bracket_khz: Option<[f64; 2]>,
    pub alphas: Option<Grid>,
    pub exclusion_band: Option<f64>,
    pub delta_range: Option<[f64; 2]>,
    pub delta_range_khz: Option<[f64; 2]>,
    pub gamma_range: Option<[f64; 2]>,
    pub gamma_range_khz: Option<[f64; 2]>,
    pub nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpLocateConfig {
    pub kind: EpKindConfig,
    pub alpha: f64,
    /// Ignored for third-order points, which fix their own Δ.
    pub delta: f64,
    /// Bracket for the second-order root; scanned upward from small γ when absent.
    pub gamma_bracket: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpTraceConfig {
    pub alpha: f64,
    pub delta_range: [f64; 2],
    pub gamma_range: [f64; 2],
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpTrajectoryConfig {
    pub kind: EpKindConfig,
    pub alphas: Grid,
    pub exclusion_band: f64,
}

fn pair(u: &Units, field: &str, plain: Option<[f64; 2]>, khz: Option<[f64; 2]>, default: Option<[f64; 2]>) -> Result<Option<[f64; 2]>, CliError> {
    let v = match (plain, khz) {
        (Some(_), Some(_)) => return Err(CliError::config(format!("{field} and {field}_khz are mutually exclusive"))),
        (Some(v), None) => Some(v),
        (None, Some(v)) => Some(v.map(|x| x / u.omega_khz)),
        (None, None) => default,
    };
    if let Some([a, b]) = v {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::config(format!("{field}: need finite [lo, hi] with lo < hi, got [{a}, {b}]")));
        }
    }
    Ok(v)
}

impl EpLocateConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let e = file.ep.clone().unwrap_or_default();
        Ok(EpLocateConfig {
            kind: e.kind.unwrap_or(EpKindConfig::Ep2),
            alpha: check_alpha("ep.alpha", e.alpha.unwrap_or(0.0))?,
            delta: u.scalar("ep.delta", e.delta, e.delta_khz, 0.0)?,
            gamma_bracket: pair(&u, "ep.gamma_bracket", e.gamma_bracket, e.gamma_bracket_khz, None)?,
        })
    }
}

impl EpTraceConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let e = file.ep.clone().unwrap_or_default();
        let nodes = e.nodes.unwrap_or(200);
        if nodes < 2 {
            return Err(CliError::config(format!("ep.nodes: need at least 2 grid nodes per axis, got {nodes}")));
        }
        if nodes * nodes > SURFACE_POINT_CAP {
            return Err(CliError::config(format!("ep.nodes: {nodes}² grid exceeds the {SURFACE_POINT_CAP}-point cap; reduce the resolution")));
        }
        let gamma_range = pair(&u, "ep.gamma_range", e.gamma_range, e.gamma_range_khz, Some([2.0, 6.0]))?.expect("defaulted");
        if gamma_range[0] < 0.0 {
            return Err(CliError::config("ep.gamma_range: γ must be non-negative"));
        }
        Ok(EpTraceConfig {
            alpha: check_alpha("ep.alpha", e.alpha.unwrap_or(0.0))?,
            delta_range: pair(&u, "ep.delta_range", e.delta_range, e.delta_range_khz, Some([-1.0, 1.0]))?.expect("defaulted"),
            gamma_range,
            nodes,
        })
    }
}

impl EpTrajectoryConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let e = file.ep.clone().unwrap_or_default();
        let alphas = e.alphas.unwrap_or(Grid::linspace(0.0, 1.0, 11));
        alphas.check("ep.alphas")?;
        check_alphas("ep.alphas", &alphas)?;
        let band = e.exclusion_band.unwrap_or(lindblad_ep::ep::DEFAULT_EXCLUSION_BAND);
        if !(band >= 0.0 && band.is_finite()) {
            return Err(CliError::config(format!("ep.exclusion_band: must be non-negative, got {band}")));
        }
        Ok(EpTrajectoryConfig { kind: e.kind.unwrap_or(EpKindConfig::Ep2), alphas, exclusion_band: band })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(NamedState),
    Bloch([f64; 3]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedState {
    Ground,
    Excited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorChoice {
    Rk4,
    DormandPrince,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveFile {
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub delta_khz: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_khz: Option<f64>,
    pub initial: Option<InitialState>,
    /// Times in units of 1/Ω.
    pub times: Option<Grid>,
    pub integrator: Option<IntegratorChoice>,
    pub n_traj: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvolveConfig {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub initial: InitialState,
    pub times: Grid,
    pub integrator: IntegratorChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoriesConfig {
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub initial: NamedState,
    pub times: Grid,
    pub n_traj: usize,
}

fn point(u: &Units, section: &str, e: &EvolveFile) -> Result<(f64, f64, f64), CliError> {
    let alpha = check_alpha(&format!("{section}.alpha"), e.alpha.unwrap_or(0.0))?;
    let delta = u.scalar(&format!("{section}.delta"), e.delta, e.delta_khz, 0.0)?;
    let gamma = u.scalar(&format!("{section}.gamma"), e.gamma, e.gamma_khz, 2.0)?;
    if gamma < 0.0 {
        return Err(CliError::config(format!("{section}.gamma: must be non-negative, got {gamma}")));
    }
    Ok((alpha, delta, gamma))
}

impl EvolveConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let e = file.evolve.clone().unwrap_or_default();
        if e.n_traj.is_some() {
            return Err(CliError::config("evolve.n_traj: only used by the trajectories command"));
        }
        let (alpha, delta, gamma) = point(&u, "evolve", &e)?;
        let times = e.times.unwrap_or(Grid::linspace(0.0, 10.0, 101));
        times.check("evolve.times")?;
        check_increasing("evolve.times", &times)?;
        let initial = e.initial.unwrap_or(InitialState::Named(NamedState::Ground));
        if let InitialState::Bloch(r) = initial {
            if r.iter().map(|x| x * x).sum::<f64>() > 1.0 + 1e-12 {
                return Err(CliError::config("evolve.initial: Bloch vector must have length ≤ 1"));
            }
        }
        Ok(EvolveConfig { alpha, delta, gamma, initial, times, integrator: e.integrator.unwrap_or(IntegratorChoice::Rk4) })
    }
}

impl TrajectoriesConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        let u = file.units()?;
        let e = file.trajectories.clone().unwrap_or_default();
        if e.integrator.is_some() {
            return Err(CliError::config("trajectories.integrator: the jump unravelling has its own propagator"));
        }
        let (alpha, delta, gamma) = point(&u, "trajectories", &e)?;
        let times = e.times.unwrap_or(Grid::linspace(0.0, 10.0, 101));
        times.check("trajectories.times")?;
        check_increasing("trajectories.times", &times)?;
        let initial = match e.initial.unwrap_or(InitialState::Named(NamedState::Ground)) {
            InitialState::Named(n) => n,
            InitialState::Bloch(_) => return Err(CliError::config("trajectories.initial: must be a pure state, \"ground\" or \"excited\"")),
        };
        let n_traj = e.n_traj.unwrap_or(1000);
        if n_traj == 0 {
            return Err(CliError::config("trajectories.n_traj: must be at least 1"));
        }
        Ok(TrajectoriesConfig { alpha, delta, gamma, initial, times, n_traj })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShotSetting {
    Count(u64),
    /// "analytic": exact probabilities, no shot noise.
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableChoice {
    SigmaZ,
    Xyz,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpsimFile {
    pub alphas: Option<Grid>,
    pub gamma: Option<Grid>,
    pub gamma_khz: Option<Grid>,
    pub delta: Option<f64>,
    pub delta_khz: Option<f64>,
    pub shots: Option<ShotSetting>,
    pub dt: Option<f64>,
    pub n_times: Option<usize>,
    pub observables: Option<ObservableChoice>,
    pub model_order: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpsimConfig {
    pub alphas: Grid,
    pub gamma: Grid,
    pub delta: f64,
    pub shots: ShotSetting,
    /// Sampling interval in units of 1/Ω.
    pub dt: f64,
    pub n_times: usize,
    pub observables: ObservableChoice,
    pub model_order: Option<usize>,
}

impl ExpsimConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        use lindblad_ep::expsim::pipeline::DEFAULT_SHOTS;
        let u = file.units()?;
        let e = file.expsim.clone().unwrap_or_default();
        let alphas = e.alphas.unwrap_or(Grid::Values(vec![0.0]));
        alphas.check("expsim.alphas")?;
        check_alphas("expsim.alphas", &alphas)?;
        let gamma = u.grid("expsim.gamma", e.gamma, e.gamma_khz, Grid::linspace(0.5, 8.0, 16))?;
        check_nonneg("expsim.gamma", &gamma)?;
        let shots = e.shots.unwrap_or(ShotSetting::Count(DEFAULT_SHOTS));
        match &shots {
            ShotSetting::Count(0) => return Err(CliError::config("expsim.shots: must be at least 1 (or \"analytic\")")),
            ShotSetting::Named(s) if s != "analytic" => return Err(CliError::config(format!("expsim.shots: expected a count or \"analytic\", got \"{s}\""))),
            _ => {}
        }
        let dt = e.dt.unwrap_or(0.025);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::config(format!("expsim.dt: must be positive, got {dt}")));
        }
        let order = e.model_order;
        if let Some(m) = order {
            if !(1..=3).contains(&m) {
                return Err(CliError::config(format!("expsim.model_order: must be 1, 2 or 3, got {m}")));
            }
        }
        let n_times = e.n_times.unwrap_or(601);
        if n_times < 4 * order.unwrap_or(3) {
            return Err(CliError::config(format!("expsim.n_times: {n_times} samples are too few for the model order")));
        }
        Ok(ExpsimConfig {
            alphas,
            gamma,
            delta: u.scalar("expsim.delta", e.delta, e.delta_khz, 0.0)?,
            shots,
            dt,
            n_times,
            observables: e.observables.unwrap_or(ObservableChoice::Xyz),
            model_order: order,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// Evaluate an instrument curve.
    Curve,
    /// Fit simulated shelving-decay data.
    DecayFit,
    /// Fit simulated resonant Rabi data with dephasing.
    DephasingFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveChoice {
    Decay,
    Dephasing,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateFile {
    pub mode: Option<CalibrationMode>,
    pub curve: Option<CurveChoice>,
    pub settings: Option<Grid>,
    pub rate: Option<f64>,
    pub omega: Option<f64>,
    pub shots: Option<u64>,
    pub times: Option<Grid>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrateConfig {
    Curve { curve: CurveChoice, settings: Grid },
    DecayFit { rate: f64, shots: u64, times: Grid, repeats: usize },
    DephasingFit { rate: f64, omega: f64, shots: u64, times: Grid, repeats: usize },
}

impl CalibrateConfig {
    pub fn resolve(file: &FileConfig) -> Result<Self, CliError> {
        use lindblad_ep::expsim::pipeline::DEFAULT_CALIBRATION_SHOTS;
        use lindblad_ep::expsim::CalibrationCurve;
        let c = file.calibrate.clone().unwrap_or_default();
        let mode = c.mode.unwrap_or(CalibrationMode::Curve);
        let reject = |present: bool, field: &str| -> Result<(), CliError> {
            if present {
                Err(CliError::config(format!("calibrate.{field}: not used in mode {mode:?}")))
            } else {
                Ok(())
            }
        };
        match mode {
            CalibrationMode::Curve => {
                reject(c.rate.is_some() || c.shots.is_some() || c.times.is_some() || c.repeats.is_some() || c.omega.is_some(), "rate/omega/shots/times/repeats")?;
                let curve = c.curve.unwrap_or(CurveChoice::Decay);
                let range = match curve {
                    CurveChoice::Decay => CalibrationCurve::decay_vs_power().range,
                    CurveChoice::Dephasing => CalibrationCurve::dephasing_vs_vpp().range,
                };
                let settings = c.settings.unwrap_or(Grid::linspace(range.0, range.1, 11));
                settings.check("calibrate.settings")?;
                Ok(CalibrateConfig::Curve { curve, settings })
            }
            CalibrationMode::DecayFit | CalibrationMode::DephasingFit => {
                reject(c.curve.is_some() || c.settings.is_some(), "curve/settings")?;
                let rate = c.rate.unwrap_or(1.0);
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(CliError::config(format!("calibrate.rate: must be non-negative, got {rate}")));
                }
                let shots = c.shots.unwrap_or(DEFAULT_CALIBRATION_SHOTS);
                if shots == 0 {
                    return Err(CliError::config("calibrate.shots: must be at least 1"));
                }
                let repeats = c.repeats.unwrap_or(1);
                if repeats == 0 {
                    return Err(CliError::config("calibrate.repeats: must be at least 1"));
                }
                if mode == CalibrationMode::DecayFit {
                    reject(c.omega.is_some(), "omega")?;
                    let times = c.times.unwrap_or(Grid::linspace(0.1, 3.0, 30));
                    times.check("calibrate.times")?;
                    check_increasing("calibrate.times", &times)?;
                    Ok(CalibrateConfig::DecayFit { rate, shots, times, repeats })
                } else {
                    let omega = c.omega.unwrap_or(1.0);
                    if !(omega > 0.0 && omega.is_finite()) {
                        return Err(CliError::config(format!("calibrate.omega: must be positive, got {omega}")));
                    }
                    let times = c.times.unwrap_or(Grid::linspace(0.0, 10.0, 51));
                    times.check("calibrate.times")?;
                    check_increasing("calibrate.times", &times)?;
                    Ok(CalibrateConfig::DephasingFit { rate, omega, shots, times, repeats })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn khz_fields_divide_by_omega() {
        let f = FileConfig::parse("omega_khz = 40\n[spectrum]\ndelta_khz = 20\ngamma_khz = { start = 0, stop = 160, n = 5 }\n").unwrap();
        let c = SpectrumConfig::resolve(&f).unwrap();
        assert_eq!(c.delta, 0.5);
        assert_eq!(c.gamma.values(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn grid_forms() {
        let f = FileConfig::parse("[spectrum]\ngamma = [1, 2.5]\n").unwrap();
        assert_eq!(SpectrumConfig::resolve(&f).unwrap().gamma.values(), vec![1.0, 2.5]);
        let f = FileConfig::parse("[spectrum]\ngamma = { start = 3, stop = 9, n = 1 }\n").unwrap();
        assert_eq!(SpectrumConfig::resolve(&f).unwrap().gamma.values(), vec![3.0]);
    }

    #[test]
    fn errors_name_the_field() {
        let err = |s: &str| SpectrumConfig::resolve(&FileConfig::parse(s).unwrap()).unwrap_err().to_string();
        assert!(err("[spectrum]\ndelta = 1\ndelta_khz = 2\n").contains("spectrum.delta"));
        assert!(err("[spectrum]\nalpha = 2\n").contains("spectrum.alpha"));
        assert!(err("[spectrum]\ngamma = []\n").contains("spectrum.gamma"));
        assert!(err("[spectrum]\ngamma = [-1]\n").contains("spectrum.gamma"));
        assert!(FileConfig::parse("[spectrum]\nbogus = 1\n").unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn shots_accept_analytic() {
        let f = FileConfig::parse("[expsim]\nshots = \"analytic\"\n").unwrap();
        assert_eq!(ExpsimConfig::resolve(&f).unwrap().shots, ShotSetting::Named("analytic".into()));
        let f = FileConfig::parse("[expsim]\nshots = \"many\"\n").unwrap();
        assert!(ExpsimConfig::resolve(&f).is_err());
    }
}
