//! Experiments, statistics and reports.

pub mod cli;
pub mod config;
pub mod dist;
pub mod favorites;
pub mod ladder;
pub mod measure;
pub mod report;
pub mod stats;
pub mod xcheck;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use config::{ExperimentConfig, ExperimentKind};
use report::StatReport;

/// Runs `f` on replicates `0..n`, replicate `i` on `base.fork(i)`, in order.
pub fn replicate<T: Send>(n: usize, base: &RngStream, f: impl Fn(usize, &mut RngStream) -> T + Sync) -> Vec<T> {
    (0..n).into_par_iter().map(|i| f(i, &mut base.fork(i as u64))).collect()
}

/// Splits per-replicate results into successes and the count of replicates
/// discarded on growth-limit or degenerate-input errors; other errors
/// propagate.
pub fn keep_usable<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let mut out = Vec::with_capacity(results.len());
    let mut discarded = 0;
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) if e.is_growth() || matches!(e, Error::Degenerate(_)) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, discarded))
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    crate::discrete::median_sorted(&v)
}

/// Runs the experiment named in `cfg`.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<StatReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let mut rep = match kind {
        ExperimentKind::Sim => xcheck::run_sim(cfg),
        ExperimentKind::Dist => dist::run_distribution_suite(cfg),
        ExperimentKind::Bjumps => xcheck::run_bjumps(cfg),
        ExperimentKind::Localize => favorites::run_localization(cfg),
        ExperimentKind::Transition => favorites::run_transition(cfg),
        ExperimentKind::Timing => favorites::run_theorem_timing(cfg),
        ExperimentKind::OracleXcheck => xcheck::run_oracle_xcheck(cfg),
        ExperimentKind::Walk => xcheck::run_walk(cfg),
    }?;
    rep.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(rep)
}
