//! `arw`: experiment runner for activated random walk simulations.
//!
//! Exit status: 0 success, 1 a check failed, 2 usage error, 3 I/O or
//! infrastructure error.

mod config;
mod output;
mod sweep;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arw_core::engine::{self, Snapshot, StabilizationMode};
use arw_core::estimators::{bounds_report, rhoc_bracket, EstimatorError, TrialPlan};
use arw_core::rng::{derive_seed, streams, SplitMix64};
use arw_core::verify::run_suite;
use arw_core::walks::{expected_returns, WalksError};
use arw_core::{make_box, Params, Site, StackSource};
use clap::{Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use config::{
    auto_escape_radius, merge, parse_law, read_config_file, BoundsArgs, ReturnsArgs, RhocArgs, StabilizeArgs,
    SweepArgs, VerifyArgs,
};
use output::{run_config, write_csv, write_json};

pub const VERSION: &str = concat!("arw ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Infra(String),
    /// Reported already; only selects the exit status.
    #[error("one or more checks failed")]
    CheckFailed,
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed => 1,
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Infra(_) => 3,
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Engine(_) => CliError::Infra(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<WalksError> for CliError {
    fn from(e: WalksError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<engine::EngineError> for CliError {
    fn from(e: engine::EngineError) -> Self {
        match e {
            engine::EngineError::Lattice(_) | engine::EngineError::DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Infra(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "arw", version, about = "Activated random walk simulation lab")]
struct Cli {
    /// Directory for output files without an explicit path.
    #[arg(long, global = true, env = "ARW_OUTPUT_DIR", default_value = ".")]
    output_dir: PathBuf,
    /// Worker threads; defaults to the available parallelism. Results do not
    /// depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON file of subcommand parameters. Flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stabilize one configuration and write its snapshot.
    Stabilize(StabilizeArgs),
    /// Run a verification suite; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Run an estimator over a parameter grid, resumably.
    Sweep(SweepArgs),
    /// Estimate the expected number of returns of simple random walk.
    Returns(ReturnsArgs),
    /// Evaluate the lower and upper critical density bounds.
    Bounds(BoundsArgs),
    /// Bracket the finite-volume pseudo-critical density.
    Rhoc(RhocArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Stabilize(_) => "stabilize",
            Command::Verify(_) => "verify",
            Command::Sweep(_) => "sweep",
            Command::Returns(_) => "returns",
            Command::Bounds(_) => "bounds",
            Command::Rhoc(_) => "rhoc",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::CheckFailed) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Infra(e.to_string()))?;
    }
    let file = cli
        .config
        .as_deref()
        .map(|p| read_config_file(p, cli.command.name()))
        .transpose()?;
    let dir = cli.output_dir.as_path();
    match cli.command {
        Command::Stabilize(a) => cmd_stabilize(merge(&a, file)?.resolve(dir)?),
        Command::Verify(a) => cmd_verify(merge(&a, file)?, dir),
        Command::Sweep(a) => sweep::cmd_sweep(merge(&a, file)?.resolve(dir)?),
        Command::Returns(a) => cmd_returns(merge(&a, file)?.resolve(dir)?),
        Command::Bounds(a) => cmd_bounds(merge(&a, file)?.resolve(dir)?),
        Command::Rhoc(a) => cmd_rhoc(merge(&a, file)?.resolve(dir)?),
    }
}

fn cmd_stabilize(a: StabilizeArgs) -> Result<(), CliError> {
    let (d, n, lambda, seed) = (a.d.unwrap(), a.n.unwrap(), a.lambda.unwrap(), a.seed.unwrap().0);
    let mut cfg = match &a.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let snap = Snapshot::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if (snap.d, snap.n) != (d, n) {
                return Err(CliError::Usage(format!(
                    "{}: snapshot has d={}, n={}; pass matching --d/--n",
                    path.display(),
                    snap.d,
                    snap.n
                )));
            }
            snap.to_configuration()
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            let lattice = make_box(d, n).map_err(|e| CliError::Usage(format!("--n: {e}")))?;
            let law = parse_law(a.law.as_deref().unwrap(), d)?;
            law.check_fits(&lattice)?;
            law.sample(&lattice, &mut SplitMix64::new(derive_seed(seed, streams::LAW, 0)))
        }
    };
    let mode = match a.mode.as_deref().unwrap() {
        "weak" => StabilizationMode::weak_origin(d),
        "strong" => StabilizationMode::strong_origin(d),
        _ => StabilizationMode::True,
    };
    let initial = Snapshot::from_configuration(&cfg, Some(seed));
    let src = StackSource::new(seed, Params::new(d, lambda).expect("validated"));
    let stats = engine::stabilize(&mut cfg, &src, &mode, Default::default())?;
    let snapshot = Snapshot::from_configuration(&cfg, Some(seed));
    let origin = cfg.state(&Site::origin(d)).expect("origin in box");
    let out = a.out.clone().unwrap();
    write_json(
        &out,
        &json!({
            "version": VERSION,
            "config": run_config("stabilize", &a),
            "initial": initial,
            "snapshot": snapshot,
            "topplings": stats.topplings,
            "killed": cfg.killed(),
            "particles": cfg.particles(),
            "origin": origin.code(),
        }),
    )?;
    println!(
        "stabilized d={d} n={n} seed={seed}: {} topplings, {} killed, origin code {} -> {}",
        stats.topplings,
        cfg.killed(),
        origin.code(),
        out.display()
    );
    Ok(())
}

fn cmd_verify(a: VerifyArgs, dir: &Path) -> Result<(), CliError> {
    let (a, opts) = a.resolve(dir)?;
    let suite = a.suite.unwrap();
    let reports = run_suite(suite, &opts)?;
    for r in &reports {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.check);
    }
    let passed = reports.iter().all(|r| r.passed);
    let out = a.out.clone().unwrap();
    write_json(
        &out,
        &json!({
            "version": VERSION,
            "config": run_config("verify", &a),
            "passed": passed,
            "checks": reports,
        }),
    )?;
    println!("report -> {}", out.display());
    if passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed)
    }
}

fn cmd_returns(a: ReturnsArgs) -> Result<(), CliError> {
    let d = a.d.unwrap();
    let est = expected_returns(
        d,
        a.trials.unwrap(),
        a.escape_radius.unwrap(),
        a.max_steps.unwrap(),
        a.seed.unwrap().0,
        a.allow_censoring.unwrap(),
    )?;
    let out = a.out.clone().unwrap();
    write_json(
        &out,
        &json!({ "version": VERSION, "config": run_config("returns", &a), "estimate": est }),
    )?;
    if est.divergent {
        println!(
            "d={d}: divergent (truncated mean {:.6} over {} walks, censoring rate {:.2e}) -> {}",
            est.mean,
            est.trials,
            est.censoring_rate,
            out.display()
        );
    } else {
        println!(
            "d={d}: E[R] = {:.6} ± {:.6} (2d·E[R] = {:.4}, censoring rate {:.2e}) -> {}",
            est.mean,
            est.std_error,
            2.0 * d as f64 * est.mean,
            est.censoring_rate,
            out.display()
        );
    }
    Ok(())
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    for &d in a.d.as_ref().unwrap() {
        let returns = if d >= 3 && !a.asymptotic.unwrap() {
            let radius = a.escape_radius.unwrap_or_else(|| auto_escape_radius(d));
            let seed = derive_seed(a.seed.unwrap().0, streams::WALKS, d as u64);
            Some(expected_returns(d, a.walks.unwrap(), radius, a.max_steps.unwrap(), seed, false)?)
        } else {
            None
        };
        for &lambda in a.lambda.as_ref().unwrap() {
            let params = Params::new(d, lambda).expect("validated");
            let r = bounds_report(params, returns.as_ref());
            println!(
                "d={d} lambda={lambda}: lower {:.6}, upper {}",
                r.lower,
                r.upper.map_or("divergent".to_string(), |u| format!("{u:.6}"))
            );
            rows.push(r);
        }
        estimates.extend(returns);
    }
    let out = a.out.clone().unwrap();
    write_json(
        &out,
        &json!({
            "version": VERSION,
            "config": run_config("bounds", &a),
            "bounds": rows,
            "returns": estimates,
        }),
    )?;
    write_csv(&out.with_extension("csv"), &rows)?;
    Ok(())
}

fn cmd_rhoc(a: RhocArgs) -> Result<(), CliError> {
    let (d, n) = (a.d.unwrap(), a.n.unwrap());
    let params = Params::new(d, a.lambda.unwrap()).expect("validated");
    let plan = TrialPlan::new(a.trials.unwrap(), a.seed.unwrap().0);
    let report = rhoc_bracket(n, params, &plan, a.rho_grid.as_ref().unwrap())?;
    let bounds = bounds_report(params, None);
    let out = a.out.clone().unwrap();
    write_json(
        &out,
        &json!({
            "version": VERSION,
            "config": run_config("rhoc", &a),
            "report": report,
            "lower_bound": bounds.lower,
            "note": "finite-volume proxy; the bracket moves with n and the trial count",
        }),
    )?;
    write_csv(&out.with_extension("csv"), &report.points)?;
    match report.bracket {
        Some([lo, hi]) => println!(
            "d={d} n={n}: occupation falls below rho between {lo} and {hi} (lower bound {:.6}) -> {}",
            bounds.lower,
            out.display()
        ),
        None => println!("d={d} n={n}: no bracket on this grid -> {}", out.display()),
    }
    Ok(())
}
