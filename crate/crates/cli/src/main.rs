//! `advect-pinn`: train, compare and inspect reference solutions from the
//! command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
//! 3 training divergence, 4 oracle failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use advect_pinn::experiment::{compare, oracle_artifacts, run, write_all, CompareAxis, RunConfig, DEFAULT_OUTPUT};
use advect_pinn::problems::{catalog, AdvectionProblem};
use advect_pinn::reference::{Oracle, DEFAULT_CFL, DEFAULT_DT_ODE, DEFAULT_FD_DX};
use advect_pinn::Error;
use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable naming the output root when neither `--out` nor the
/// config sets one.
const OUT_ENV: &str = "ADVECT_PINN_OUT";

#[derive(Debug, Parser)]
#[command(name = "advect-pinn", version, about = "PINN experiments for 1-D advection with discontinuous data")]
struct Cli {
    /// Output directory (overrides the config and $ADVECT_PINN_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Comma-separated run seeds, replacing the config's list.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every seed of a config and write logs, slices and metrics.
    Run { config: PathBuf },
    /// Run two arms with paired seeds and write a summary.
    Compare {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Write a reference solution without training.
    Oracle {
        /// Catalog name or path to a run config.
        problem: String,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// FD grid spacing, or the output grid spacing for pointwise methods.
        #[arg(long, default_value_t = DEFAULT_FD_DX)]
        dx: f64,
        #[arg(long, default_value_t = DEFAULT_CFL)]
        cfl: f64,
        #[arg(long, default_value_t = DEFAULT_DT_ODE)]
        dt_ode: f64,
        /// Also report upwind FD at dx against dx/2.
        #[arg(long)]
        self_convergence: bool,
        /// Also report the upwind FD vs RK4 backtrace L1 gap.
        #[arg(long)]
        cross_check: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    TwoStageVsSingle,
    StandardVsUpwind,
    FilteredVsRaw,
}

impl From<Axis> for CompareAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::TwoStageVsSingle => CompareAxis::TwoStageVsSingle,
            Axis::StandardVsUpwind => CompareAxis::StandardVsUpwind,
            Axis::FilteredVsRaw => CompareAxis::FilteredVsRaw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Auto,
    Exact,
    CharacteristicsRk4,
    UpwindFd,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 1,
            Error::TrainingDiverged { .. } | Error::DivergedLoss(_) | Error::NonFiniteGradient(_) => 3,
            Error::Oracle(_) | Error::CharacteristicExit { .. } | Error::StepLimit(_) => 4,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure { code: 1, message: format!("cannot read {}: {e}", path.display()) })?;
    RunConfig::from_toml_str(&text).map_err(|e| {
        let f = Failure::from(e);
        Failure { code: 2, message: format!("{}: {}", path.display(), f.message) }
    })
}

/// Applies `--seeds` and picks the output directory: flag, then config, then
/// the environment, then the built-in default.
fn apply_overrides(cli: &Cli, cfg: &mut RunConfig) {
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.output = Some(output_dir(cli, cfg.output.clone()));
}

fn output_dir(cli: &Cli, from_config: Option<PathBuf>) -> PathBuf {
    cli.out
        .clone()
        .or(from_config)
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn resolve_problem(arg: &str) -> Result<(AdvectionProblem, Option<Oracle>), Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let cfg = read_config(path)?;
        return Ok((cfg.problem.resolve()?, cfg.oracle));
    }
    Ok((catalog(arg)?, None))
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = read_config(config)?;
            apply_overrides(cli, &mut cfg);
            let resolved = cfg.resolve()?;
            let result = run(&resolved)?;
            result.write(&resolved.output)?;
            let means = result.means();
            Ok(format!(
                "wrote {} ({} seeds, mean MAE raw {:.6}, filtered {:.6}, filtered interior {:.6})",
                resolved.output.display(),
                resolved.seeds.len(),
                means[0],
                means[1],
                means[2]
            ))
        }
        Command::Compare { config, axis } => {
            let mut cfg = read_config(config)?;
            apply_overrides(cli, &mut cfg);
            let resolved = cfg.resolve()?;
            let cmp = compare(&resolved, (*axis).into())?;
            cmp.write(&resolved.output)?;
            Ok(format!("wrote {}\n{}", resolved.output.display(), cmp.summary_csv().trim_end()))
        }
        Command::Oracle { problem, method, dx, cfl, dt_ode, self_convergence, cross_check } => {
            let (problem, configured) = resolve_problem(problem)?;
            let oracle = match method {
                Method::Auto => configured.unwrap_or_else(|| Oracle::auto(&problem)),
                Method::Exact => Oracle::Exact,
                Method::CharacteristicsRk4 => Oracle::CharacteristicsRk4 { dt_ode: *dt_ode },
                Method::UpwindFd => Oracle::UpwindFd { dx: *dx, cfl: *cfl },
            };
            let oracle = match oracle {
                Oracle::UpwindFd { .. } if *method == Method::Auto => Oracle::UpwindFd { dx: *dx, cfl: *cfl },
                o => o,
            };
            let dir = output_dir(cli, None);
            let files = oracle_artifacts(&problem, oracle, *dx, *self_convergence, *cross_check)?;
            let names: Vec<&str> = files.iter().map(|(n, _)| *n).collect();
            write_all(&dir, &files)?;
            Ok(format!("wrote {} to {}", names.join(", "), dir.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
