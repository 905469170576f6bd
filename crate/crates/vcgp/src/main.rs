//! Command-line front end for the distributed varying-coefficient engine.
//!
//! Every flag mirrors a config-file key; flags given on the command line
//! override the file, which overrides built-in defaults. Errors print one
//! machine-parsable line on stderr and exit nonzero.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vcgp::runner::{
    combine_run, metrics_run, report_run, run_distributed, run_full, simulate_run, KvMap,
    RunConfig,
};
use vcgp::{Result, VcgpError};

#[derive(Parser)]
#[command(name = "vcgp", version, about = "distributed varying-coefficient model fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated train/test/truth triple
    Simulate(SimulateArgs),
    /// Fit one chain on the complete dataset
    FitFull(FitArgs),
    /// Fit per-subset chains and combine their draws
    FitDistributed(FitArgs),
    /// Re-run combination over stored subset draws
    Combine(RunDirArgs),
    /// Compute metric files for stored draw tables
    Metrics(RunDirArgs),
    /// Print a collated summary of a run directory
    Report(RunDirArgs),
}

/// Flags shared by every verb; each maps onto one config key.
#[derive(Args, Default)]
struct CommonArgs {
    /// key=value config file; command-line flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// training observations
    #[arg(long)]
    n: Option<usize>,
    /// held-out observations
    #[arg(long)]
    n_test: Option<usize>,
    /// directory to create
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// training data file
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// held-out data file for prediction
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    /// generating values for metric files
    #[arg(long)]
    truth: Option<PathBuf>,
    /// run directory to create
    #[arg(long)]
    out: Option<PathBuf>,
    /// observations per subset
    #[arg(long)]
    m: Option<usize>,
    /// number of subsets
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// prior scale for the slice auxiliary draw
    #[arg(long)]
    ess_scale: Option<f64>,
    /// update all kernel parameters in one slice sweep
    #[arg(long)]
    joint_ess: Option<bool>,
    /// correlation family: exponential or gneiting
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    phi_lower: Option<f64>,
    #[arg(long)]
    phi_upper: Option<f64>,
    #[arg(long)]
    psi_lower: Option<f64>,
    #[arg(long)]
    psi_upper: Option<f64>,
    #[arg(long)]
    kappa_lower: Option<f64>,
    #[arg(long)]
    kappa_upper: Option<f64>,
    /// low-rank approximation size (omit for dense)
    #[arg(long)]
    fitc_rank: Option<usize>,
    /// place inducing points on a grid instead of sampling them
    #[arg(long)]
    fitc_grid: Option<bool>,
    /// comma-separated combination methods
    #[arg(long)]
    methods: Option<String>,
    /// combination blocking: auto, joint, or per-point
    #[arg(long)]
    block_policy: Option<String>,
}

#[derive(Args)]
struct RunDirArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// existing run directory
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    block_policy: Option<String>,
}

fn set_opt<T: ToString>(map: &mut KvMap, key: &str, value: &Option<T>) -> Result<()> {
    if let Some(v) = value {
        map.set(key, &v.to_string())?;
    }
    Ok(())
}

fn set_path(map: &mut KvMap, key: &str, value: &Option<PathBuf>) -> Result<()> {
    if let Some(v) = value {
        let s = v.to_str().ok_or_else(|| {
            VcgpError::Config(format!("{key} path is not valid unicode"))
        })?;
        map.set(key, s)?;
    }
    Ok(())
}

fn common_overrides(map: &mut KvMap, c: &CommonArgs) -> Result<()> {
    set_opt(map, "seed", &c.seed)?;
    set_opt(map, "workers", &c.workers)
}

fn resolve(common: &CommonArgs, fill: impl FnOnce(&mut KvMap) -> Result<()>) -> Result<RunConfig> {
    let mut map = KvMap::default();
    common_overrides(&mut map, common)?;
    fill(&mut map)?;
    RunConfig::resolve(common.config.as_deref(), &map)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let cfg = resolve(&a.common, |m| {
                set_opt(m, "n", &a.n)?;
                set_opt(m, "n_test", &a.n_test)?;
                set_path(m, "out", &a.out)
            })?;
            let dir = simulate_run(&cfg)?;
            println!("simulated into {}", dir.display());
            Ok(())
        }
        Command::FitFull(a) => {
            let cfg = fit_config(&a)?;
            let dir = run_full(&cfg)?;
            println!("full fit in {}", dir.display());
            Ok(())
        }
        Command::FitDistributed(a) => {
            let cfg = fit_config(&a)?;
            let dir = run_distributed(&cfg)?;
            println!("distributed fit in {}", dir.display());
            Ok(())
        }
        Command::Combine(a) => {
            let cfg = run_dir_config(&a)?;
            combine_run(&cfg)?;
            println!("combined draws refreshed");
            Ok(())
        }
        Command::Metrics(a) => {
            let cfg = run_dir_config(&a)?;
            metrics_run(&cfg)?;
            println!("metric files refreshed");
            Ok(())
        }
        Command::Report(a) => {
            let cfg = run_dir_config(&a)?;
            print!("{}", report_run(&cfg)?);
            Ok(())
        }
    }
}

fn fit_config(a: &FitArgs) -> Result<RunConfig> {
    resolve(&a.common, |m| {
        set_path(m, "dataset", &a.dataset)?;
        set_path(m, "test_dataset", &a.test_dataset)?;
        set_path(m, "truth", &a.truth)?;
        set_path(m, "out", &a.out)?;
        set_opt(m, "m", &a.m)?;
        set_opt(m, "k", &a.k)?;
        set_opt(m, "iterations", &a.iterations)?;
        set_opt(m, "burn_in", &a.burn_in)?;
        set_opt(m, "thin", &a.thin)?;
        set_opt(m, "ess_scale", &a.ess_scale)?;
        set_opt(m, "joint_ess", &a.joint_ess)?;
        set_opt(m, "kernel", &a.kernel)?;
        set_opt(m, "phi_lower", &a.phi_lower)?;
        set_opt(m, "phi_upper", &a.phi_upper)?;
        set_opt(m, "psi_lower", &a.psi_lower)?;
        set_opt(m, "psi_upper", &a.psi_upper)?;
        set_opt(m, "kappa_lower", &a.kappa_lower)?;
        set_opt(m, "kappa_upper", &a.kappa_upper)?;
        set_opt(m, "fitc_rank", &a.fitc_rank)?;
        set_opt(m, "fitc_grid", &a.fitc_grid)?;
        set_opt(m, "methods", &a.methods)?;
        set_opt(m, "block_policy", &a.block_policy)
    })
}

fn run_dir_config(a: &RunDirArgs) -> Result<RunConfig> {
    resolve(&a.common, |m| {
        set_path(m, "run", &a.run)?;
        set_path(m, "truth", &a.truth)?;
        set_path(m, "test_dataset", &a.test_dataset)?;
        set_opt(m, "methods", &a.methods)?;
        set_opt(m, "block_policy", &a.block_policy)
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\\', "\\\\").replace('"', "\\\"");
            eprintln!("error kind={} message=\"{message}\"", e.kind());
            ExitCode::FAILURE
        }
    }
}
