//! Favorite points along hitting ladders: one replicate of the localization
//! and transition experiments.

use serde::Serialize;

use super::measure::MAX_WIDTH;
use crate::env::{extend_both_until, sample_environment, GridPath, Side};
use crate::error::{Error, Result};
use crate::extrema::{compute_landmarks, LandmarkConstants, Landmarks};
use crate::loctime::{run_ladder, FavoriteRecord, Skeleton};
use crate::rng::RngStream;

/// Half-width of `I(x) = (x - (log |x|)^c, x + (log |x|)^c)`; empty for `|x| <= 1`.
pub fn window_radius(x: f64, c: f64) -> f64 {
    let l = x.abs().ln();
    if l > 0.0 {
        l.powf(c)
    } else {
        0.0
    }
}

pub fn in_window(f: f64, x: f64, c: f64) -> bool {
    (f - x).abs() < window_radius(x, c)
}

fn inside(x: f64, (a, b): (f64, f64)) -> bool {
    a < x && x < b
}

/// Grows both wings by half their width.
fn widen(env: GridPath, rng: &mut RngStream) -> Result<GridPath> {
    if env.width(Side::Left).min(env.width(Side::Right)) >= MAX_WIDTH {
        return Err(Error::GrowthLimit { side: Side::Right, width: MAX_WIDTH });
    }
    let (l, r) = (env.width(Side::Left) * 1.5, env.width(Side::Right) * 1.5);
    let chunk = 0.5 * l.max(r);
    extend_both_until(
        env,
        |p| p.width(Side::Left) >= l.min(MAX_WIDTH) && p.width(Side::Right) >= r.min(MAX_WIDTH),
        rng,
        chunk,
        MAX_WIDTH,
    )
}

/// Landmarks at level `r`, growing `env` until they are all on the path.
pub fn landmarks_on(mut env: GridPath, r: f64, k: LandmarkConstants, rng: &mut RngStream) -> Result<(GridPath, Landmarks)> {
    loop {
        match compute_landmarks(&env, r, k) {
            Ok(lm) => return Ok((env, lm)),
            Err(e) if e.is_growth() => env = widen(env, rng)?,
            Err(e) => return Err(e),
        }
    }
}

/// Runs `f` on a skeleton of `env`, widening the environment when the
/// driving path needs more room.
fn with_skeleton<T>(mut env: GridPath, rng: &mut RngStream, mut f: impl FnMut(&mut Skeleton, &mut RngStream) -> Result<T>) -> Result<T> {
    // room for the excursions beyond the outermost targets
    env = widen(env, rng)?;
    for _ in 0..4 {
        let mut sk = Skeleton::new(&env)?;
        match f(&mut sk, rng) {
            Err(e) if e.is_growth() => env = widen(env, rng)?,
            other => return other,
        }
    }
    Err(Error::GrowthLimit { side: Side::Right, width: env.width(Side::Right) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalizationDraw {
    pub r: f64,
    pub failure: bool,
    pub eta_first: bool,
    pub records: usize,
    /// Records whose favorite lies in `I(b_r)`.
    pub covered: usize,
    pub b_r: f64,
    /// `|F - b_r|` at the record whose log-time is nearest `r`.
    pub gap_at_level: f64,
    /// `(log t, F)` at each record.
    pub path: Vec<(f64, f64)>,
}

/// One environment at level `r`: the favorite point along the ladder
/// `0 -> zeta_r -> ... -> eta_r` against `(alpha_r, gamma_r)` and `I(b_r)`.
pub fn localization_draw(h: f64, r: f64, k: LandmarkConstants, c: f64, refine: u32, rng: &mut RngStream) -> Result<LocalizationDraw> {
    let env = sample_environment(rng, h, 2.0 * r * r)?;
    let (env, lm) = landmarks_on(env, r, k, rng)?;
    let run = with_skeleton(env, rng, |sk, rng| run_ladder(sk, &lm, refine, rng))?;
    let sep = lm.separation_interval();
    let out = run.records.iter().any(|f| !inside(f.location, sep));
    let path: Vec<(f64, f64)> = run.records.iter().map(record_point).collect();
    let nearest = path.iter().min_by(|a, b| (a.0 - r).abs().total_cmp(&(b.0 - r).abs())).expect("ladder has records");
    Ok(LocalizationDraw {
        r,
        failure: run.eta_first || out,
        eta_first: run.eta_first,
        records: run.records.len(),
        covered: run.records.iter().filter(|f| in_window(f.location, lm.b_r, c)).count(),
        b_r: lm.b_r,
        gap_at_level: (nearest.1 - lm.b_r).abs(),
        path,
    })
}

fn record_point(f: &FavoriteRecord) -> (f64, f64) {
    let t = match f.stop {
        crate::loctime::StopSpec::Hitting { time: Some(t), .. } => t,
        _ => f64::NAN,
    };
    (t.ln(), f.location)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionDraw {
    /// `W^#(b_r, b_{r++})`: the jump level `r^+`.
    pub barrier: f64,
    pub b_r: f64,
    pub b_next: f64,
    /// Log diffusion time of the switch to `(alpha_{r++}, gamma_{r++})`.
    pub crossover_log_time: Option<f64>,
    /// The favorite left the one-switch pattern.
    pub violation: bool,
    pub eta_first: bool,
    /// `(log t, F)` along the ladder from `eta_r` to `zeta_{r++}`.
    pub path: Vec<(f64, f64)>,
}

/// Crossover of the favorite point from the valley of `b_r` to that of
/// `b_{r++}` along the ladder `eta_r -> ... -> zeta_{r++}`, on `env` or on a
/// fresh environment when `env` is `None`.
pub fn transition_draw(
    env: Option<GridPath>,
    h: f64,
    r: f64,
    k: LandmarkConstants,
    refine: u32,
    rng: &mut RngStream,
) -> Result<TransitionDraw> {
    let env = match env {
        Some(e) => e,
        None => sample_environment(rng, h, 2.0 * r * r)?,
    };
    let (env, lm) = landmarks_on(env, r, k, rng)?;
    let (env, next) = landmarks_on(env, lm.r_plus * (1.0 + 1e-9), k, rng)?;
    if (next.b_r - lm.b_r_plusplus).abs() > 1e-9 {
        return Err(Error::Degenerate("bottom after the jump does not match".into()));
    }
    let (sep, sep_next) = (lm.separation_interval(), next.separation_interval());
    let (records, eta_first) = with_skeleton(env, rng, |sk, rng| {
        let run = run_ladder(sk, &lm, refine, rng)?;
        if run.eta_first {
            return Ok((Vec::new(), true));
        }
        let mut recs = vec![run.records.last().cloned().expect("ladder has records")];
        let (from, to) = (sk.knot(lm.eta_r)?, sk.knot(next.zeta_r)?);
        let rungs = sk.ladder(sk.knot(next.b_r)?, from, to, refine).unwrap_or_else(|_| vec![from, to]);
        for &i in rungs.iter().filter(|&&i| i != from) {
            sk.advance(i, rng)?;
            recs.push(sk.favorite()?);
        }
        Ok((recs, false))
    })?;
    let path: Vec<(f64, f64)> = records.iter().map(record_point).collect();
    let switch = path.iter().position(|&(_, f)| inside(f, sep_next));
    let violation = eta_first
        || match switch {
            None => true,
            Some(s) => path[..s].iter().any(|&(_, f)| !inside(f, sep)) || path[s..].iter().any(|&(_, f)| !inside(f, sep_next)),
        };
    // the switch happened between the previous record and this one
    let crossover_log_time = switch.map(|s| if s == 0 { path[0].0 } else { 0.5 * (path[s - 1].0 + path[s].0) });
    Ok(TransitionDraw {
        barrier: lm.r_plus,
        b_r: lm.b_r,
        b_next: next.b_r,
        crossover_log_time,
        violation,
        eta_first,
        path,
    })
}

/// Two valleys with linear slopes `slope` around bottoms at 1 and at `x2`
/// (`depth` lower), separated by a barrier of height `barrier`, with walls
/// rising to `wall` above each bottom, plus `noise` times a Brownian path.
/// The origin sits on the inner slope of the first valley, so `b` has jumps
/// below the barrier.
pub fn two_valley_env(h: f64, barrier: f64, depth: f64, slope: f64, wall: f64, noise: f64, rng: &mut RngStream) -> Result<GridPath> {
    let top = 1.0 + barrier / slope;
    let x2 = top + (barrier + depth) / slope;
    let knots = [
        (1.0 - wall / slope - 1.0, wall - slope),
        (1.0 - wall / slope, wall - slope),
        (0.0, 0.0),
        (1.0, -slope),
        (top, barrier - slope),
        (x2, -depth - slope),
        (x2 + wall / slope, wall - depth - slope),
        (x2 + wall / slope + 1.0, wall - depth - slope),
    ];
    let base = GridPath::piecewise_linear(h, &knots)?;
    let rough = sample_environment(rng, h, base.width(Side::Left).max(base.width(Side::Right)))?;
    let vals: Vec<f64> = (0..base.len())
        .map(|i| {
            let x = base.loc(i);
            base.value(i) + noise * rough.eval(x).unwrap_or(0.0)
        })
        .collect();
    GridPath::from_values(h, vals, base.origin_index())
}
