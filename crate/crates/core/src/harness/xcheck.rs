//! Cross-checks between independent routes, the jump-rate law, the Sinai walk
//! oracle and plain simulation.

use serde_json::json;

use super::config::ExperimentConfig;
use super::report::{Check, StatReport, Table, Verdict};
use super::stats::ks_two_sample;
use super::{keep_usable, replicate};
use crate::diffusion::{hit_probability, occupation_local_time, scale_function_recentred, simulate_direct, simulate_to_exit};
use crate::discrete::{favorite_site_tracks_bottom, IntEnvironment, Increments};
use crate::env::{sample_environment, GridPath};
use crate::error::{Error, Result};
use crate::extrema::{find_x_extrema, is_x_extremum};
use crate::loctime::ray_knight_profile;
use crate::renewal::{jump_count_estimate, mean_se};
use crate::rng::RngStream;

use super::measure::jump_count_draw;

mod tag {
    pub const EXTREMA: u64 = 1;
    pub const ORACLE_ENV: u64 = 2;
    pub const RAY_KNIGHT: u64 = 3;
    pub const DIRECT: u64 = 4;
    pub const HIT: u64 = 5;
}

/// Knots where the brute-force definition and the decomposition disagree.
pub fn extrema_mismatches(path: &GridPath, level: f64) -> Result<usize> {
    let d = find_x_extrema(path, level)?;
    let mut emitted = vec![false; path.len()];
    for p in &d.points {
        emitted[p.index] = true;
    }
    let mut bad = 0;
    for i in 1..path.len() - 1 {
        let brute = is_x_extremum(path, path.loc(i), level)?;
        bad += (brute.is_some() != emitted[i]) as usize;
    }
    Ok(bad)
}

pub const EXTREMA_STEP: f64 = 1e-3;
pub const EXTREMA_HALF_WIDTH: f64 = 10.0;
pub const EXTREMA_LEVELS: [f64; 3] = [0.5, 1.0, 2.0];

pub fn extrema_oracle(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let res = replicate(n, &base.fork(tag::EXTREMA), |_, rng| -> Result<Vec<usize>> {
        let env = sample_environment(rng, EXTREMA_STEP, EXTREMA_HALF_WIDTH)?;
        EXTREMA_LEVELS.iter().map(|&l| extrema_mismatches(&env, l)).collect()
    });
    let mut bad = 0;
    let mut incomplete = 0;
    for r in res {
        match r {
            Ok(v) => bad += v.iter().sum::<usize>(),
            Err(Error::Incomplete(_)) => incomplete += 1,
            Err(e) => return Err(e),
        }
    }
    rep.discarded += incomplete;
    rep.checks.push(Check::new(
        "extrema_oracle",
        "knots emitted by the decomposition are exactly those passing the definition",
        json!({"step": EXTREMA_STEP, "half_width": EXTREMA_HALF_WIDTH, "levels": EXTREMA_LEVELS, "incomplete": incomplete}),
        Some(0.0),
        bad as f64,
        n - incomplete,
        bad == 0 && incomplete < n,
    ));
    Ok(())
}

/// `E_0` of the exit time of `(lo, hi)`: `int G(0, x) 2 e^{-W(x)} dx` on the
/// knots, with `A` the trapezoid scale function.
pub fn expected_exit_time(env: &GridPath, lo: f64, hi: f64) -> Result<f64> {
    let (i0, i1) = (env.nearest_index(lo)?, env.nearest_index(hi)?);
    let h = env.step();
    let o = env.origin_index();
    let mut a = vec![0.0; env.len()];
    for i in o + 1..=i1 {
        a[i] = a[i - 1] + 0.5 * h * (env.value(i - 1).exp() + env.value(i).exp());
    }
    for i in (i0..o).rev() {
        a[i] = a[i + 1] - 0.5 * h * (env.value(i + 1).exp() + env.value(i).exp());
    }
    let (alo, ahi) = (a[i0], a[i1]);
    let span = ahi - alo;
    let g = |i: usize| {
        if i >= o {
            (0.0 - alo) * (ahi - a[i]) / span
        } else {
            (a[i] - alo) * (ahi - 0.0) / span
        }
    };
    let f = |i: usize| 2.0 * g(i) * (-env.value(i)).exp();
    Ok((i0..i1).map(|i| 0.5 * h * (f(i) + f(i + 1))).sum())
}

pub const ORACLE_STEP: f64 = 0.01;
pub const ORACLE_DT: f64 = 1e-4;
pub const ORACLE_BIN: f64 = 0.25;

/// The fixed environment of the Ray–Knight oracle: the first stream whose
/// path makes `0 -> 1` quick (`E tau <= 5`) and has a point `lo` on the left
/// with `|A(lo)| >= 1000 A(1)`, so that exits at `lo` are rare.
pub fn oracle_environment(base: &RngStream) -> Result<(GridPath, f64)> {
    let b = base.fork(tag::ORACLE_ENV);
    for j in 0..1000u64 {
        let env = sample_environment(&mut b.fork(j), ORACLE_STEP, 10.0)?;
        let sf = scale_function_recentred(&env)?;
        let a1 = sf.eval(1.0)?;
        let o = env.origin_index();
        let Some(i) = (1..o).rev().find(|&i| sf.values()[i].abs() >= 1e3 * a1) else { continue };
        let lo = env.loc(i);
        let et = expected_exit_time(&env, lo, 1.0)?;
        if et <= 5.0 {
            return Ok((env, lo));
        }
    }
    Err(Error::Degenerate("no oracle environment among 1000 streams".into()))
}

pub fn ray_knight_oracle(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let (env, lo) = oracle_environment(base)?;
    let h = ORACLE_BIN / 2.0;
    let grid: Vec<f64> = (-20..=20).map(|k| k as f64 * ORACLE_STEP).collect();
    let rk = replicate(n, &base.fork(tag::RAY_KNIGHT), |_, rng| {
        ray_knight_profile(&env, 1.0, &grid, rng).map(|p| p.bin_average(-h, h))
    });
    let rk: Vec<f64> = rk.into_iter().collect::<Result<_>>()?;
    let direct = replicate(n, &base.fork(tag::DIRECT), |_, rng| -> Result<Option<f64>> {
        let run = simulate_to_exit(&env, lo, 1.0, ORACLE_DT, 1 << 32, Some(ORACLE_BIN), rng)?;
        // exits at `lo` are not hitting times of 1
        Ok(run.hit_hi.then(|| run.occupation.expect("occupation requested").bin_average(-h, h)))
    });
    let (direct, discarded) = keep_usable(direct)?;
    let left = direct.iter().filter(|d| d.is_none()).count();
    let direct: Vec<f64> = direct.into_iter().flatten().collect();
    rep.discarded += discarded + left;
    let ks = ks_two_sample(&rk, &direct)?;
    let mut t = Table::new("local_time_at_zero", &["ray_knight", "direct"]);
    for i in 0..n {
        t.push(vec![rk[i], direct.get(i).copied().unwrap_or(f64::NAN)]);
    }
    rep.tables.push(t);
    rep.checks.push(Check::new(
        "ray_knight_vs_direct",
        "L_X(tau(1), 0) by squared Bessel profiles and by direct simulation",
        json!({"lo": lo, "dt": ORACLE_DT, "bin": ORACLE_BIN, "exits_left": left, "ks_statistic": ks.statistic,
               "mean_ray_knight": mean_se(&rk).0, "mean_direct": mean_se(&direct).0}),
        None,
        ks.p_value,
        direct.len(),
        ks.pass,
    ));
    Ok(())
}

pub const HIT_STEP: f64 = 1e-3;
pub const HIT_DT: f64 = 1e-3;

pub fn hit_probability_oracle(triples: usize, runs: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let b = base.fork(tag::HIT);
    let mut t = Table::new("hit_probability", &["y0", "eta", "analytic", "empirical", "std_err"]);
    let mut worst = 0.0f64;
    for j in 0..triples {
        let mut rng = b.fork(j as u64);
        let y0 = -(0.5 + 1.5 * rng.open01());
        let eta = 0.5 + 1.5 * rng.open01();
        let env = sample_environment(&mut rng, HIT_STEP, 3.0)?;
        let p = hit_probability(&scale_function_recentred(&env)?, y0, eta)?;
        let hits = replicate(runs, &rng.fork(0), |_, r| simulate_to_exit(&env, y0, eta, HIT_DT, 1 << 32, None, r).map(|e| e.hit_hi));
        let hits: Vec<bool> = hits.into_iter().collect::<Result<_>>()?;
        let f = hits.iter().filter(|&&x| x).count() as f64 / runs as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt().max(1.0 / runs as f64);
        worst = worst.max((f - p).abs() / se);
        t.push(vec![y0, eta, p, f, se]);
    }
    rep.tables.push(t);
    rep.checks.push(Check::new(
        "hit_probability",
        "P(hit eta before y0) = |A(y0)| / (|A(y0)| + A(eta)) within 3 binomial standard errors",
        json!({"triples": triples, "runs": runs, "dt": HIT_DT}),
        Some(3.0),
        worst,
        triples * runs,
        worst <= 3.0,
    ));
    Ok(())
}

/// `replicates / 10` environments for the extrema oracle, `replicates` runs
/// on each side of the Ray–Knight oracle and `replicates / 50` triples of
/// `replicates` runs for the hitting probabilities.
pub fn run_oracle_xcheck(cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut rep = StatReport::new("xcheck", cfg);
    let base = RngStream::new(cfg.seed, 0);
    let n = cfg.replicates.max(8);
    extrema_oracle((n / 10).max(1), &base, &mut rep)?;
    ray_knight_oracle(n, &base, &mut rep)?;
    hit_probability_oracle((n / 50).max(1), n, &base, &mut rep)?;
    Ok(rep)
}

pub const RATE_T: f64 = 10.0;
pub const SCAN_T: f64 = 4.0;

/// Renewal estimate of `n(t) / log t` at `t = e^10` over `replicates` chains,
/// and the environment scan at `t = e^4` (`replicates / 5` environments)
/// against the renewal estimate there (`10 replicates` chains).
pub fn run_bjumps(cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut rep = StatReport::new("bjumps", cfg);
    let base = RngStream::new(cfg.seed, 0);
    let n = cfg.replicates.max(8);
    let far = jump_count_estimate(RATE_T.exp(), n, &base.fork(1))?;
    rep.checks.push(Check::new(
        "jump_rate",
        "mean n(t)/log t at t = e^10 in [1.20, 1.47] with standard error below 0.02",
        json!({"std_err": far.std_err}),
        Some(4.0 / 3.0),
        far.mean,
        n,
        (1.20..=1.47).contains(&far.mean) && far.std_err < 0.02,
    ));
    let t = SCAN_T.exp();
    let renewal = jump_count_estimate(t, 10 * n, &base.fork(2))?;
    let res = replicate((n / 5).max(8), &base.fork(3), |_, rng| jump_count_draw(t, cfg.step, rng));
    let (counts, discarded) = keep_usable(res)?;
    rep.discarded += discarded;
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64 / SCAN_T).collect();
    let (m, se) = mean_se(&xs);
    let pooled = (se * se + renewal.std_err * renewal.std_err).sqrt();
    let mut table = Table::new("scan_counts", &["count"]);
    for &c in &counts {
        table.push(vec![c as f64]);
    }
    rep.tables.push(table);
    rep.checks.push(Check::new(
        "scan_vs_renewal",
        "environment scan and renewal chain agree on n(e^4)/4 within 2 pooled standard errors",
        json!({"step": cfg.step, "scan_std_err": se, "renewal_std_err": renewal.std_err, "discarded": discarded}),
        Some(renewal.mean),
        m,
        xs.len(),
        (m - renewal.mean).abs() <= 2.0 * pooled,
    ));
    Ok(rep)
}

/// `V(x) = depth min(|x| / 10, 1)` plus unit-slope walls beyond 30.
fn single_well(depth: f64) -> Result<IntEnvironment> {
    let v = (-40..=40).map(|x: i64| depth * (x.abs() as f64 / 10.0).min(1.0) + (x.abs() - 30).max(0) as f64).collect();
    IntEnvironment::from_potential(-40, v)
}

pub fn run_walk(cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut rep = StatReport::new("walk", cfg);
    let base = RngStream::new(cfg.seed, 0);
    let n = cfg.replicates.max(8);
    let two = IntEnvironment::two_valley(4, 1, 2.0)?;
    let r = favorite_site_tracks_bottom(&two, 100_000, n, 1.0, &base.fork(1))?;
    let ratio = match (r.median_crossover, r.barrier) {
        (Some(c), Some(b)) => c / b.exp(),
        _ => f64::NAN,
    };
    rep.checks.push(Check::new(
        "walk_crossover_time",
        "median favorite-site switch within a factor 3 of e^W#",
        json!({"barrier": r.barrier, "median_crossover": r.median_crossover, "discarded": r.discarded}),
        Some(1.0),
        ratio,
        n,
        (1.0 / 3.0..=3.0).contains(&ratio),
    ));
    let r = favorite_site_tracks_bottom(&single_well(8.0)?, 20_000, n, 10.0, &base.fork(2))?;
    rep.checks.push(Check::new(
        "walk_single_valley_tracking",
        "favorite site within the window of the bottom at the checkpoints",
        json!({"radius": r.radius}),
        Some(0.95),
        r.tracking_fraction,
        n,
        r.tracking_fraction >= 0.95,
    ));
    let env = IntEnvironment::sample(Increments::Coin, 4000, &mut base.fork(3))?;
    let r = favorite_site_tracks_bottom(&env, 1_000_000, n, 10.0, &base.fork(4))?;
    let mut c = Check::new(
        "walk_random_tracking",
        "favorite site near b_{log n} in a coin-flip potential",
        json!({"radius": r.radius, "discarded": r.discarded, "no_valley_structure": r.no_valley_structure}),
        None,
        r.tracking_fraction,
        n,
        true,
    );
    c.verdict = Verdict::NotApplicable;
    rep.checks.push(c);
    Ok(rep)
}

/// One direct run on a sampled environment: the path and its occupation
/// density, which must integrate to the horizon.
pub fn run_sim(cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut rep = StatReport::new("sim", cfg);
    let mut rng = RngStream::new(cfg.seed, 0);
    let env = sample_environment(&mut rng, cfg.step, 20.0)?;
    let horizon = 100.0;
    let dt = 1e-3;
    let path = simulate_direct(&env, horizon, dt, &mut rng)?;
    let occ = occupation_local_time(&path, 0.1)?;
    let mut t = Table::new("path", &["t", "x"]);
    for (s, x) in path.times.iter().zip(&path.positions).step_by(100) {
        t.push(vec![*s, *x]);
    }
    rep.tables.push(t);
    let mut t = Table::new("occupation", &["x", "local_time"]);
    for (g, v) in occ.grid.iter().zip(&occ.values) {
        t.push(vec![*g, *v]);
    }
    rep.tables.push(t);
    let total = occ.integral();
    rep.checks.push(Check::new(
        "occupation_identity",
        "int L_X(t, x) dx = t",
        json!({"dt": dt, "bin": 0.1}),
        Some(horizon),
        total,
        path.times.len(),
        (total - horizon).abs() <= 1e-9 * horizon,
    ));
    Ok(rep)
}
