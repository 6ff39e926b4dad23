//! Command line: `brox <experiment> [flags]`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, ExperimentKind, SEED_VAR};
use super::report::StatReport;
use crate::error::{Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "brox", version, about = "Experiments on diffusion in a Brownian environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one diffusion path and its occupation density.
    Sim(Flags),
    /// Jump rate of the bottom process.
    Bjumps(Flags),
    /// Favorite point against the valley landmarks.
    Localize(Flags),
    /// Crossover of the favorite point between valleys.
    Transition(Flags),
    /// Crossover times against jump levels of the bottom process.
    Timing(Flags),
    /// Distributional laws and tail bounds.
    Dist(Flags),
    /// Sinai walk on the integers.
    Walk(Flags),
    /// Cross-checks between independent routes.
    Xcheck(Flags),
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Directory for report.json and the CSV tables.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, Flags) {
        match self {
            Command::Sim(f) => (ExperimentKind::Sim, f),
            Command::Bjumps(f) => (ExperimentKind::Bjumps, f),
            Command::Localize(f) => (ExperimentKind::Localize, f),
            Command::Transition(f) => (ExperimentKind::Transition, f),
            Command::Timing(f) => (ExperimentKind::Timing, f),
            Command::Dist(f) => (ExperimentKind::Dist, f),
            Command::Walk(f) => (ExperimentKind::Walk, f),
            Command::Xcheck(f) => (ExperimentKind::OracleXcheck, f),
        }
    }
}

/// Config file, then `BROX_SEED`, then flags.
fn resolve(kind: ExperimentKind, flags: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &flags.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::Param(format!("config is for `{}`, not `{}`", k.name(), kind.name())));
        }
    }
    cfg.kind = Some(kind);
    if let Ok(s) = std::env::var(SEED_VAR) {
        cfg.seed = s.trim().parse().map_err(|_| Error::Param(format!("{SEED_VAR} must be an unsigned integer, got {s:?}")))?;
    }
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(n) = flags.replicates {
        cfg.replicates = n;
    }
    if let Some(h) = flags.step {
        cfg.step = h;
    }
    if flags.out.is_some() {
        cfg.out = flags.out.clone();
    }
    if flags.workers.is_some() {
        cfg.workers = flags.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs `kind` in a pool of `cfg.workers` threads.
pub fn run_with_workers(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| Error::Param(format!("thread pool: {e}")))?;
    pool.install(|| super::run(kind, cfg))
}

pub fn exit_code(report: &StatReport) -> i32 {
    if report.all_pass() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn execute(kind: ExperimentKind, flags: Flags) -> Result<i32> {
    let cfg = resolve(kind, &flags)?;
    let report = run_with_workers(kind, &cfg)?;
    for c in &report.checks {
        eprintln!("{:<14} {:<44} {}", format!("{:?}", c.verdict).to_lowercase(), c.check, c.empirical);
    }
    match &cfg.out {
        Some(dir) => report.write(dir)?,
        None => println!("{}", report.to_json()?),
    }
    Ok(exit_code(&report))
}

pub fn cli_main(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    let (kind, flags) = cli.command.split();
    match execute(kind, flags) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
