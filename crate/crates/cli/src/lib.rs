//! `lep`: spectra, exceptional points, dynamics and simulated experiments of
//! the driven two-level system from a TOML configuration.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::commands::Report;
use crate::config::*;
use crate::error::CliError;
use crate::output::{render_csv, render_json, render_sidecar, Header};

#[derive(Debug, Parser)]
#[command(name = "lep", version, about = "Liouvillian spectra and exceptional points of a driven, damped two-level system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file; one table per command.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file for the primary table; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write the resolved configuration to `<out>.config.json`.
    #[arg(long, global = true)]
    pub sidecar: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalue branches along a γ sweep.
    Spectrum,
    /// Eigenvalues over a two-parameter grid.
    Surface,
    /// Exceptional points.
    Ep {
        #[command(subcommand)]
        action: EpAction,
    },
    /// Master-equation time evolution.
    Evolve,
    /// Quantum-jump trajectory averages.
    Trajectories,
    /// Simulated tomography experiment and eigenvalue extraction.
    Expsim,
    /// Instrument calibration curves and simulated calibration fits.
    Calibrate,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum EpAction {
    /// Locate one second- or third-order point.
    Locate,
    /// Trace exceptional lines over a (Δ, γ) window.
    Trace,
    /// Exceptional-point location as a function of α.
    Trajectory,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Surface => "surface",
            Command::Ep { action: EpAction::Locate } => "ep locate",
            Command::Ep { action: EpAction::Trace } => "ep trace",
            Command::Ep { action: EpAction::Trajectory } => "ep trajectory",
            Command::Evolve => "evolve",
            Command::Trajectories => "trajectories",
            Command::Expsim => "expsim",
            Command::Calibrate => "calibrate",
        }
    }
}

fn header<T: Serialize>(command: &Command, seed: Option<u64>, resolved: &T) -> Result<Header, CliError> {
    let config_toml = toml::to_string(resolved).map_err(|e| CliError::config(format!("cannot echo configuration: {e}")))?;
    let config_json = serde_json::to_value(resolved).map_err(|e| CliError::config(format!("cannot echo configuration: {e}")))?;
    Ok(Header { command: command.name().to_string(), seed, config_toml, config_json })
}

fn require_seed(seed: Option<u64>, command: &Command) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::config(format!("{}: a seed is required (--seed or top-level `seed`)", command.name())))
}

/// Resolves the configuration and runs one command.
pub fn execute(command: &Command, file: &FileConfig, seed: Option<u64>) -> Result<(Header, Report), CliError> {
    let seed = seed.or(file.seed);
    match command {
        Command::Spectrum => {
            let c = SpectrumConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::spectrum(&c)?))
        }
        Command::Surface => {
            let c = SurfaceConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::surface(&c)?))
        }
        Command::Ep { action: EpAction::Locate } => {
            let c = EpLocateConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::ep_locate(&c)?))
        }
        Command::Ep { action: EpAction::Trace } => {
            let c = EpTraceConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::ep_trace(&c)?))
        }
        Command::Ep { action: EpAction::Trajectory } => {
            let c = EpTrajectoryConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::ep_trajectory(&c)?))
        }
        Command::Evolve => {
            let c = EvolveConfig::resolve(file)?;
            Ok((header(command, None, &c)?, commands::evolve(&c)?))
        }
        Command::Trajectories => {
            let c = TrajectoriesConfig::resolve(file)?;
            let s = require_seed(seed, command)?;
            Ok((header(command, Some(s), &c)?, commands::trajectories(&c, s)?))
        }
        Command::Expsim => {
            let c = ExpsimConfig::resolve(file)?;
            let s = require_seed(seed, command)?;
            Ok((header(command, Some(s), &c)?, commands::expsim(&c, s)?))
        }
        Command::Calibrate => {
            let c = CalibrateConfig::resolve(file)?;
            let s = match c {
                CalibrateConfig::Curve { .. } => None,
                _ => Some(require_seed(seed, command)?),
            };
            Ok((header(command, s, &c)?, commands::calibrate(&c, s)?))
        }
    }
}

/// `<stem>.<name>.<ext>` next to the primary output.
fn secondary_path(out: &Path, name: &str, format: Format) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{name}.{}", format.extension()))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".config.json");
    PathBuf::from(s)
}

fn write_outputs(cli: &Cli, header: &Header, report: &Report) -> Result<(), CliError> {
    let render = |t| match cli.format {
        Format::Csv => render_csv(header, t),
        Format::Json => render_json(header, t),
    };
    match &cli.out {
        Some(out) => {
            for t in &report.tables {
                let path = if t.name.is_empty() { out.clone() } else { secondary_path(out, t.name, cli.format) };
                std::fs::write(&path, render(t))?;
            }
            if cli.sidecar {
                std::fs::write(sidecar_path(out), render_sidecar(header))?;
            }
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            for (k, t) in report.tables.iter().enumerate() {
                if k > 0 {
                    writeln!(stdout)?;
                }
                stdout.write_all(render(t).as_bytes())?;
            }
        }
    }
    Ok(())
}

fn run_cli(cli: &Cli) -> Result<(), CliError> {
    if cli.sidecar && cli.out.is_none() {
        return Err(CliError::config("--sidecar needs --out"));
    }
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            FileConfig::parse(&text)?
        }
        None => FileConfig::default(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::config("--workers: must be at least 1"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| CliError::config(format!("--workers: {e}")))?;
    let (header, report) = pool.install(|| execute(&cli.command, &file, cli.seed))?;
    write_outputs(cli, &header, &report)?;
    if report.failures > 0 {
        return Err(CliError::Numerical(format!("{} point(s) failed; see the status and message columns", report.failures)));
    }
    Ok(())
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
