use std::path::PathBuf;
use std::process::ExitCode;

use boltzlab::config::{ExperimentConfig, EXAMPLE};
use boltzlab::operator::CACHE_ENV;
use boltzlab::pipeline::{run_pipeline, PipelineOptions, Stage, StageStatus};
use boltzlab::Error;
use clap::{Args, Parser, Subcommand};

/// Spectral simulator and verification lab for the linearized Boltzmann equation.
#[derive(Parser)]
#[command(name = "boltzlab", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output root; overrides `[outputs] dir`. The run directory is <out>/<config hash>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a config; prints derived exponents and the run hash.
    Validate {
        config: Option<PathBuf>,
        /// Print a documented example config instead.
        #[arg(long)]
        example: bool,
    },
    /// Assemble (or reuse cached) collision operators.
    Assemble(RunArgs),
    /// Run the linear envelope or the lattice simulation.
    Simulate(RunArgs),
    /// Evaluate norms and functionals on the stored run.
    Measure(RunArgs),
    /// Coercivity, inequality suites, energy ledger and macro residuals.
    Verify(RunArgs),
    /// Fit the log-log decay slope over the configured window.
    FitDecay(RunArgs),
    /// Run several stages in dependency order.
    Pipeline {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated subset of assemble,simulate,measure,verify,fit-decay.
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
    },
}

const OK: u8 = 0;
const CONFIG: u8 = 2;
const NUMERICAL: u8 = 3;
const CHECK: u8 = 4;

fn code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) | Error::Budget(_) => NUMERICAL,
        _ => CONFIG,
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::parse(&text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: cannot start a pool of {n} threads");
            return ExitCode::from(CONFIG);
        }
    }
    ExitCode::from(run(cli.cmd))
}

fn run(cmd: Command) -> u8 {
    let (args, stages) = match cmd {
        Command::Validate { example: true, .. } => {
            print!("{EXAMPLE}");
            return OK;
        }
        Command::Validate { config: None, .. } => {
            eprintln!("error: give a config path or --example");
            return CONFIG;
        }
        Command::Validate { config: Some(p), .. } => return validate(&p),
        Command::Assemble(a) => (a, vec![Stage::Assemble]),
        Command::Simulate(a) => (a, vec![Stage::Simulate]),
        Command::Measure(a) => (a, vec![Stage::Measure]),
        Command::Verify(a) => (a, vec![Stage::Verify]),
        Command::FitDecay(a) => (a, vec![Stage::FitDecay]),
        Command::Pipeline { run, stages } => {
            let st = match stages {
                None => Stage::ALL.to_vec(),
                Some(names) => match names.iter().map(|s| Stage::parse(s.trim())).collect() {
                    Ok(v) => v,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return CONFIG;
                    }
                },
            };
            (run, st)
        }
    };
    let cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return code(&e);
        }
    };
    let opts = PipelineOptions { out: args.out, cache: None };
    let out = match run_pipeline(&cfg, &stages, &opts) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return code(&e);
        }
    };
    for r in &out.manifest.stages {
        if !stages.contains(&r.stage) {
            continue;
        }
        let status = match r.status {
            StageStatus::Ok => "ok",
            StageStatus::CheckFailed => "check failed",
            StageStatus::Failed => "failed",
            StageStatus::Skipped => "skipped",
        };
        println!("{:<10} {:<12} {:>8.2}s  {}", r.stage.name(), status, r.wall_seconds, r.notes.join("; "));
        if let Some(e) = &r.error {
            eprintln!("  {e}");
        }
    }
    println!("run directory: {}", out.run_dir.display());
    if let Some(e) = &out.error {
        code(e)
    } else if out.check_failed {
        CHECK
    } else {
        OK
    }
}

fn validate(path: &PathBuf) -> u8 {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return code(&e);
        }
    };
    let s = match cfg.interpolation_schedule() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return code(&e);
        }
    };
    let summary = serde_json::json!({
        "hash": cfg.short_hash(),
        "soft": cfg.is_soft(),
        "p": if s.p.is_finite() { serde_json::json!(s.p) } else { serde_json::json!("inf") },
        "sigma": s.sigma,
        "omega": s.omega,
        "theta": s.theta_hard,
        "soft_indices": s.soft,
        "cache": std::env::var(CACHE_ENV).ok(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    OK
}
