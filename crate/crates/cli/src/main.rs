use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use levelgas::config::RunConfig;
use levelgas::ensemble::run_ensemble;
use levelgas::error::{Error, ErrorCategory};
use levelgas::figures::{emit_figures, write_pair};
use levelgas::integrator::simulate;
use levelgas::noise::NoiseKind;
use levelgas::oracle::{compare, run_both};
use levelgas::output::{read_trajectory_csv, write_ensemble_csv, write_trajectory_csv, TrajectoryTable};
use serde_json::json;

/// Pechukas-Yukawa level dynamics with the eigenbasis master equation.
#[derive(Parser)]
#[command(name = "levelgas", version)]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "LEVELGAS_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its CSV (and optional SVGs).
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Integrate with both the gas picture and direct evolution and compare.
    OracleCompare {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Per-entry density-matrix tolerance.
        #[arg(long)]
        entry_tol: Option<f64>,
        /// Eigenvalue tolerance.
        #[arg(long)]
        level_tol: Option<f64>,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run R realizations with split seeds and write per-time statistics.
    Ensemble {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(short = 'r', long)]
        realizations: usize,
        #[arg(long, default_value_t = 0)]
        master_seed: u64,
    },
    /// Render level and occupation figures from trajectory CSVs.
    EmitFigures {
        #[arg(long)]
        csv: PathBuf,
        /// A noisy run of the same model, for the noisy pair of figures.
        #[arg(long)]
        noisy_csv: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    t1: Option<f64>,
    /// Noise amplitude; a positive value on a noiseless config selects Wiener noise.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for the level and occupation SVGs.
    #[arg(long)]
    svg: Option<PathBuf>,
}

enum Failure {
    Error(Error),
    Mismatch,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(dt) = o.dt {
        cfg.integrator.dt = dt;
    }
    if let Some(stride) = o.stride {
        cfg.integrator.stride = stride;
    }
    if let Some(t1) = o.t1 {
        cfg.schedule.t1 = t1;
    }
    if let Some(sigma) = o.sigma {
        cfg.noise.sigma = sigma;
        if sigma > 0.0 && cfg.noise.kind == NoiseKind::None {
            cfg.noise.kind = NoiseKind::Wiener;
        }
    }
    if o.csv.is_some() {
        cfg.outputs.csv.clone_from(&o.csv);
    }
    if o.svg.is_some() {
        cfg.outputs.svg.clone_from(&o.svg);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn print(value: &serde_json::Value) {
    // A closed pipe on stdout is not worth failing a finished run over.
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(value).expect("JSON values always serialize")
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let traj = simulate(&cfg.simulation()?)?;
            let csv = cfg.outputs.csv.clone().unwrap_or_else(|| out_dir.join("trajectory.csv"));
            write_trajectory_csv(&traj, create(&csv)?)?;
            let mut svgs = Vec::new();
            if let Some(dir) = &cfg.outputs.svg {
                let table = TrajectoryTable::from_trajectory(&traj)?;
                svgs = write_pair(&table, dir, "", cfg.noise.kind != NoiseKind::None)?;
            }
            print(&json!({
                "csv": csv,
                "svg": svgs,
                "samples": traj.samples.len(),
                "config_hash": traj.metadata.config_hash,
                "diagnostics": traj.diagnostics,
            }));
        }
        Command::OracleCompare {
            config,
            overrides,
            entry_tol,
            level_tol,
            report,
        } => {
            let mut cfg = load(&config, &overrides)?;
            if let Some(tol) = entry_tol {
                cfg.tolerances.entry = tol;
            }
            if let Some(tol) = level_tol {
                cfg.tolerances.level = tol;
            }
            cfg.validate()?;
            let (traj, oracle) = run_both(&cfg.simulation()?)?;
            let rep = compare(&traj, &oracle, cfg.tolerances.anticrossing_gap)?;
            let pass = rep.within(&cfg.tolerances);
            let value = json!({ "pass": pass, "tolerances": cfg.tolerances, "report": rep });
            if let Some(path) = report {
                serde_json::to_writer_pretty(create(&path)?, &value).map_err(Error::from)?;
            }
            print(&value);
            if !pass {
                return Err(Failure::Mismatch);
            }
        }
        Command::Ensemble {
            config,
            overrides,
            realizations,
            master_seed,
        } => {
            let cfg = load(&config, &overrides)?;
            let stats = run_ensemble(&cfg, realizations, master_seed)?;
            let csv = cfg.outputs.csv.clone().unwrap_or_else(|| out_dir.join("ensemble.csv"));
            write_ensemble_csv(&stats, create(&csv)?)?;
            print(&json!({
                "csv": csv,
                "requested": stats.requested,
                "completed": stats.completed,
                "master_seed": stats.master_seed,
                "max_purity_drift": stats.purity_drift.iter().copied().fold(0.0, f64::max),
                "failures": stats.failures,
            }));
        }
        Command::EmitFigures { csv, noisy_csv } => {
            let clean = read_trajectory_csv(File::open(&csv).map_err(Error::from)?)?;
            let noisy = match noisy_csv {
                Some(path) => Some(read_trajectory_csv(File::open(&path).map_err(Error::from)?)?),
                None => None,
            };
            let written = emit_figures(&clean, noisy.as_ref(), &out_dir)?;
            print(&json!({ "svg": written }));
        }
    }
    Ok(())
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Degeneracy => 3,
        ErrorCategory::Io => 4,
        ErrorCategory::Schema => 5,
        ErrorCategory::Numeric => 6,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Mismatch) => ExitCode::from(1),
        Err(Failure::Error(e)) => {
            let category = e.category();
            eprintln!(
                "{}",
                json!({ "error": { "category": category.as_str(), "message": e.to_string() } })
            );
            ExitCode::from(exit_code(category))
        }
    }
}
