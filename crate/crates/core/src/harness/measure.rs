//! One-replicate samplers of environment functionals, on paths sampled with
//! grid step `h`. Extremes and levels are corrected for the grid with
//! [`OVERSHOOT_BETA`].

use rand_distr::{Distribution, StandardNormal};

use crate::env::{extend_both_until, sample_environment, GridPath};
use crate::error::{Error, Result};
use crate::extrema::{compute_b, compute_b_jumps, find_x_extrema, sampled_level, OVERSHOOT_BETA};
use crate::renewal::{b1_density, B1Density};
use crate::rng::RngStream;

/// Widest environment wing any sampler will grow.
pub const MAX_WIDTH: f64 = 1e5;

fn grow_until(env: GridPath, chunk: f64, rng: &mut RngStream, pred: impl FnMut(&GridPath) -> bool) -> Result<GridPath> {
    extend_both_until(env, pred, rng, chunk, MAX_WIDTH)
}

/// Right-wing functionals at level 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneSidedDraw {
    /// `-W(beta_1^+)`.
    pub neg_min: f64,
    /// Running maximum up to `beta_1^+`.
    pub max_before: f64,
}

/// Scans a fresh Brownian path until its rise above the running minimum
/// reaches 1. Extremes between grid points are drawn from the Brownian bridge
/// over each step, so only the stopping rule sees the grid.
pub fn one_sided_draw(h: f64, rng: &mut RngStream) -> OneSidedDraw {
    // the rise is read at grid points only: one overshoot
    let level = 1.0 - OVERSHOOT_BETA * h.sqrt();
    let sd = h.sqrt();
    let (mut v, mut mn, mut mx, mut mx_before) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let next = v + sd * z;
        // bridge extremes: (a + b -+ sqrt((b - a)^2 - 2h log U)) / 2
        let spread = |u: f64| ((next - v).powi(2) - 2.0 * h * u.ln()).sqrt();
        let lo = 0.5 * (v + next - spread(rng.open01()));
        let hi = 0.5 * (v + next + spread(rng.open01()));
        mx = mx.max(hi);
        if lo < mn {
            mn = lo;
            mx_before = mx;
        }
        v = next;
        if v - mn >= level {
            break;
        }
    }
    OneSidedDraw { neg_min: -mn, max_before: mx_before }
}

/// `(W(b_1) - W(b_1^{++})) / W^#(b_1, b_1^{++})`, or `None` when the next jump
/// of `b` lies above level 16.
pub fn bottom_ratio_draw(h: f64, rng: &mut RngStream) -> Result<Option<f64>> {
    let level = sampled_level(1.0, h);
    let corr = 2.0 * OVERSHOOT_BETA * h.sqrt();
    let mut env = sample_environment(rng, h, 8.0)?;
    let mut cap = 2.0;
    loop {
        env = grow_until(env, 4.0 * cap, rng, |p| find_x_extrema(p, cap).is_ok())?;
        let bp = compute_b_jumps(&env, level, cap)?;
        let j = bp.jump_levels.partition_point(|&s| s <= level);
        if let Some(&s) = bp.jump_levels.get(j) {
            return Ok(Some((bp.bottom_values[j] - bp.bottom_values[j + 1]) / (s + corr)));
        }
        if cap >= 16.0 {
            return Ok(None);
        }
        cap *= 2.0;
    }
}

/// Ratio of the record excursion heights (above the running minimum of the
/// right wing) that follow the first record of height at least 1, censored at
/// `cap`. `None` when that first record exceeds `first_max`.
pub fn record_ratio_draw(h: f64, cap: f64, first_max: f64, rng: &mut RngStream) -> Option<f64> {
    let (sd, corr) = (h.sqrt(), 2.0 * OVERSHOOT_BETA * h.sqrt());
    let (mut v, mut mn, mut cur, mut best) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut first: Option<f64> = None;
    loop {
        let z: f64 = StandardNormal.sample(rng);
        v += sd * z;
        if v < mn {
            // the running excursion is complete
            if cur > 0.0 {
                match first {
                    None if cur > best => {
                        best = cur;
                        if best + corr >= 1.0 {
                            if best + corr > first_max {
                                return None;
                            }
                            first = Some(best + corr);
                        }
                    }
                    Some(r) if cur + corr > r => return Some(((cur + corr) / r).min(cap)),
                    _ => {}
                }
            }
            mn = v;
            cur = 0.0;
            continue;
        }
        cur = cur.max(v - mn);
        // both outcomes are settled before the excursion ends; waiting for
        // its return to the minimum has infinite mean
        match first {
            Some(r) if cur + corr >= cap * r => return Some(cap),
            None if cur + corr > first_max => return None,
            _ => {}
        }
    }
}

/// `b_1` of a fresh two-sided environment.
pub fn b1_draw(h: f64, rng: &mut RngStream) -> Result<f64> {
    let level = sampled_level(1.0, h);
    let env = sample_environment(rng, h, 6.0)?;
    let env = grow_until(env, 6.0, rng, |p| find_x_extrema(p, level).is_ok())?;
    compute_b(&env, level)
}

/// Jumps of `b` with level in `[1, t]`.
pub fn jump_count_draw(t: f64, h: f64, rng: &mut RngStream) -> Result<usize> {
    if !(t > 1.0) {
        return Ok(0);
    }
    let (lo, hi) = (sampled_level(1.0, h), sampled_level(t, h));
    let env = sample_environment(rng, h, t * t)?;
    let env = grow_until(env, t * t, rng, |p| find_x_extrema(p, hi).is_ok())?;
    let bp = compute_b_jumps(&env, lo, hi)?;
    Ok(bp.jumps_in(lo, hi))
}

/// `x_1(W, 1)` and the gap `x_2(W, 1) - x_1(W, 1)`.
pub fn extrema_gap_draw(h: f64, rng: &mut RngStream) -> Result<(f64, f64)> {
    let level = sampled_level(1.0, h);
    let env = sample_environment(rng, h, 6.0)?;
    let env = grow_until(env, 6.0, rng, |p| match find_x_extrema(p, level) {
        Ok(d) => d.points.len() > d.index_zero + 2,
        Err(_) => false,
    })?;
    let d = find_x_extrema(&env, level)?;
    let (x1, x2) = (d.points[d.index_zero + 1].location, d.points[d.index_zero + 2].location);
    Ok((x1, x2 - x1))
}

/// `P(l > t)` for `l = inf {s : |W_s| = 1}`; twice the rescaled `b_1` density.
pub fn exit_time_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    (2.0 * b1_density(t, B1Density::Rescaled)).clamp(0.0, 1.0)
}

/// Inverse-CDF draw of `l`.
pub fn exit_time_draw(rng: &mut RngStream) -> f64 {
    let u = rng.open01();
    // survival is decreasing: find t with survival(t) = u
    let (mut a, mut b) = (0.0f64, 1.0f64);
    while exit_time_survival(b) > u {
        b *= 2.0;
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if exit_time_survival(m) > u {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 0.1) {
        return Err(Error::Param(format!("grid step must lie in (0, 0.1), got {h}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::stats::ks_test;

    #[test]
    fn exit_time_mean_is_one() {
        // E l = 1 for the exit time of (-1, 1)
        let mut rng = RngStream::new(3, 0);
        let n = 20_000;
        let m = (0..n).map(|_| exit_time_draw(&mut rng)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn one_sided_minimum_is_exponential() {
        let xs: Vec<f64> = (0..2000).map(|i| one_sided_draw(1e-3, &mut RngStream::new(5, i)).neg_min).collect();
        assert!(ks_test(&xs, |x| 1.0 - (-x).exp()).unwrap().pass);
    }

    #[test]
    fn record_ratios_respect_censoring() {
        for i in 0..200 {
            if let Some(r) = record_ratio_draw(4e-3, 4.0, 4.0, &mut RngStream::new(6, i)) {
                assert!((1.0..=4.0).contains(&r));
            }
        }
    }
}



