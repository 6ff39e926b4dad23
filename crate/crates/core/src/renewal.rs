//! Environment-free samplers for the jump structure of `b`, the `b_1`
//! density series, and the closed-form tail bounds checked against Monte
//! Carlo.

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{extend_both_until, sample_environment, sample_one_sided};
use crate::error::{Error, Result};
use crate::extrema::{compute_b_jumps, find_x_extrema, one_sided_beta, sampled_level, w_sharp, OVERSHOOT_BETA};
use crate::rng::RngStream;

/// `r` with density `(1 + x)^{-2}` on `x >= 0`.
pub fn sample_ratio_r(rng: &mut RngStream) -> f64 {
    1.0 / rng.open01() - 1.0
}

/// `(sigma, tau)` with densities `x^{-2}` and `2 x^{-3}` on `x >= 1`.
pub fn sample_sigma_tau(rng: &mut RngStream) -> (f64, f64) {
    let sigma = 1.0 / rng.open01();
    let tau = 1.0 / rng.open01().sqrt();
    (sigma, tau)
}

/// One-sided jump locations `h_{n+1} = (1 + r_n) h_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalChain {
    pub h: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RenewalChain {
    pub fn sample(h0: f64, n: usize, rng: &mut RngStream) -> Result<Self> {
        if !(h0 > 0.0) {
            return Err(Error::Param(format!("h0 must be positive, got {h0}")));
        }
        let ratios: Vec<f64> = (0..n).map(|_| sample_ratio_r(rng)).collect();
        let mut h = Vec::with_capacity(n + 1);
        h.push(h0);
        for r in &ratios {
            h.push((1.0 + r) * h[h.len() - 1]);
        }
        Ok(RenewalChain { h, ratios })
    }
}

/// Depths `zeta_{2n+1} = sigma_{n+1} zeta_{2n}`, `zeta_{2n+2} = tau_{n+1} zeta_{2n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignedDepthChain {
    pub zeta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
}

impl SignedDepthChain {
    pub fn sample(zeta0: f64, n: usize, rng: &mut RngStream) -> Result<Self> {
        if !(zeta0 > 0.0) {
            return Err(Error::Param(format!("zeta0 must be positive, got {zeta0}")));
        }
        let (mut zeta, mut sigma, mut tau) = (vec![zeta0], Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let (s, t) = sample_sigma_tau(rng);
            let z = s * zeta[zeta.len() - 1];
            zeta.push(z);
            zeta.push(t * z);
            sigma.push(s);
            tau.push(t);
        }
        Ok(SignedDepthChain { zeta, sigma, tau })
    }
}

/// Solves `ln x - x / m = c` for `x` in `[lo, 1]`, where the left side is
/// decreasing (`lo >= m`).
fn solve_record(lo: f64, m: f64, c: f64) -> f64 {
    let g = |x: f64| x.ln() - x / m - c;
    let (mut a, mut b) = (lo, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if g(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * b {
            break;
        }
    }
    0.5 * (a + b)
}

/// Records, in the order they are met, among the excursion heights of one
/// slope of relative height 1 that starts with a first excursion of height
/// `u`. Calls `visit` with each new record height (relative).
///
/// Excursions of height `y` reached after a rise to `s` form a Poisson process
/// with intensity `ds dy / y^2` on `y < s < 1`.
fn excursion_records(u: f64, rng: &mut RngStream, mut visit: impl FnMut(f64)) {
    let (mut s, mut m) = (u, u);
    loop {
        let c = rng.open01().ln() + s.ln() - s / m;
        // no further record before the slope ends
        if 1f64.ln() - 1.0 / m >= c {
            return;
        }
        let sp = solve_record(s, m, c);
        let v = rng.open01();
        let y = 1.0 / (1.0 / sp + v * (1.0 / m - 1.0 / sp));
        visit(y);
        m = y;
        s = sp;
    }
}

/// Jumps of `b` with level in `[1, t]` for one environment, sampled on the log
/// scale from deep below level 1 upwards: alternating sign changes (depth
/// ratios `tau`) and one-sided slopes (ratios `sigma`), with the record
/// excursions inside each slope contributing the same-sign jumps.
pub fn sample_jump_count(t: f64, rng: &mut RngStream) -> usize {
    if !(t > 1.0) {
        return 0;
    }
    let lt = t.ln();
    let mut log_d = -20.0f64;
    let mut jumps = 0;
    loop {
        let (sigma, tau) = sample_sigma_tau(rng);
        log_d += tau.ln();
        if log_d > lt {
            return jumps;
        }
        if log_d >= 0.0 {
            jumps += 1;
        }
        let h = log_d + sigma.ln();
        excursion_records(1.0 / sigma, rng, |y| {
            let lvl = h + y.ln();
            if (0.0..=lt).contains(&lvl) {
                jumps += 1;
            }
        });
        log_d = h;
        if log_d > lt {
            return jumps;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpCount {
    pub t: f64,
    pub replicates: usize,
    /// Mean of `n(t) / log t`.
    pub mean: f64,
    pub std_err: f64,
}

/// Mean of `n(t) / log t` over `replicates` independent chains. Replicate `i`
/// uses `rng.fork(i)`.
pub fn jump_count_estimate(t: f64, replicates: usize, rng: &RngStream) -> Result<JumpCount> {
    if !(t > 1.0) || replicates < 2 {
        return Err(Error::Param(format!("need t > 1 and at least 2 replicates, got t={t}, n={replicates}")));
    }
    let lt = t.ln();
    let xs: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|i| sample_jump_count(t, &mut rng.fork(i as u64)) as f64 / lt)
        .collect();
    let (mean, std_err) = mean_se(&xs);
    Ok(JumpCount { t, replicates, mean, std_err })
}

pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum B1Density {
    /// Exponent `(2k+1)^2 |x|`.
    Stated,
    /// Exponent `(2k+1)^2 pi^2 |x| / 8`.
    Rescaled,
}

impl B1Density {
    fn rate(self) -> f64 {
        match self {
            B1Density::Stated => 1.0,
            B1Density::Rescaled => std::f64::consts::PI.powi(2) / 8.0,
        }
    }
}

/// Partial sum of `(2/pi) sum_k (-1)^k/(2k+1) e^{-(2k+1)^2 c |x|}` over
/// `terms` terms, with the magnitude of the first omitted term (an error
/// bound for the alternating series).
pub fn eval_b1_density(x: f64, terms: usize, variant: B1Density) -> Result<(f64, f64)> {
    if terms == 0 {
        return Err(Error::Param("need at least one term".into()));
    }
    let c = variant.rate() * x.abs();
    let term = |k: usize| {
        let o = (2 * k + 1) as f64;
        (-o * o * c).exp() / o
    };
    let mut s = 0.0;
    for k in 0..terms {
        let t = term(k);
        s += if k % 2 == 0 { t } else { -t };
    }
    let f = 2.0 / std::f64::consts::PI;
    Ok((f * s, f * term(terms)))
}

/// Density with enough terms for a truncation error below `1e-14`.
pub fn b1_density(x: f64, variant: B1Density) -> f64 {
    let c = variant.rate() * x.abs();
    if c == 0.0 {
        return 0.5;
    }
    let k = ((32.0 / c).sqrt() * 0.5 + 1.0).ceil() as usize;
    eval_b1_density(x, k.max(50), variant).expect("terms >= 1").0
}

/// `int_{-inf}^{inf} f` by composite Simpson on `[0, 60]`, doubled.
pub fn integrate_b1_density(variant: B1Density) -> f64 {
    let n = 200_000;
    let h = 60.0 / n as f64;
    let mut s = b1_density(0.0, variant) + b1_density(60.0, variant);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * b1_density(i as f64 * h, variant);
    }
    2.0 * s * h / 3.0
}

/// `P(|b_1| <= x)` by Simpson on `[0, x]`.
pub fn b1_abs_cdf(x: f64, variant: B1Density) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let n = 2 * ((x * 2000.0).ceil() as usize).max(50);
    let h = x / n as f64;
    let mut s = b1_density(0.0, variant) + b1_density(x, variant);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * b1_density(i as f64 * h, variant);
    }
    (2.0 * s * h / 3.0).min(1.0)
}

/// One closed-form bound compared with a Monte Carlo frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub check: String,
    pub argument: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub n: usize,
    /// `true` when the bound is an equality checked two-sidedly.
    pub exact: bool,
    pub pass: bool,
}

impl BoundCheck {
    fn upper(check: &str, argument: f64, analytic: f64, hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
        BoundCheck {
            check: check.into(),
            argument,
            analytic,
            empirical: p,
            std_err: se,
            n,
            exact: false,
            pass: p <= analytic + 3.0 * se,
        }
    }

    fn equal(check: &str, argument: f64, analytic: f64, hits: usize, n: usize) -> Self {
        let mut b = Self::upper(check, argument, analytic, hits, n);
        b.exact = true;
        b.pass = (b.empirical - analytic).abs() <= 3.0 * b.std_err;
        b
    }
}

/// Quantities of one environment used by the bound checks.
#[derive(Clone, Copy, Debug)]
struct LevelOne {
    b1: f64,
    /// Last jump level of `b` below 1 (`0` when below the search floor).
    r_minus: f64,
    /// First jump level above 1 (`inf` when above the search ceiling).
    r_plus: f64,
    w_sharp_b1_0: f64,
}

const R_FLOOR: f64 = 0.02;
const R_CEIL: f64 = 6.0;

fn level_one(step: f64, rng: &mut RngStream) -> Result<LevelOne> {
    let env = sample_environment(rng, step, 10.0)?;
    let env = extend_both_until(env, |p| find_x_extrema(p, R_CEIL).is_ok(), rng, 10.0, 2000.0)?;
    let low = compute_b_jumps(&env, R_FLOOR, 1.0)?;
    let high = compute_b_jumps(&env, 1.0, R_CEIL)?;
    let b1 = high.at(1.0);
    let r_minus = low.jump_levels.iter().rev().find(|&&s| s < 1.0).copied().unwrap_or(0.0);
    let r_plus = high.jump_levels.iter().find(|&&s| s > 1.0).copied().unwrap_or(f64::INFINITY);
    let w0 = w_sharp(&env, b1, 0.0)?;
    Ok(LevelOne { b1, r_minus, r_plus, w_sharp_b1_0: w0 })
}

/// Brownian quantities on `[0, 100]`: `sup_{1<=t<=100} |B_t|/sqrt t`,
/// the hitting time of 1, and the one-sided excursion height.
#[derive(Clone, Copy, Debug)]
struct PathOne {
    lil_sup: f64,
    rho1: f64,
    wbar: f64,
}

fn path_one(step: f64, rng: &mut RngStream) -> Result<PathOne> {
    let p = sample_one_sided(rng, step, 100.0)?;
    let v = p.right_values();
    let mut lil_sup = 0.0f64;
    let mut rho1 = f64::INFINITY;
    for (i, &w) in v.iter().enumerate() {
        let t = i as f64 * step;
        if t >= 1.0 {
            lil_sup = lil_sup.max(w.abs() / t.sqrt());
        }
        if w >= 1.0 && rho1.is_infinite() {
            rho1 = t;
        }
    }
    // running maximum before beta_1^+, corrected for the grid
    let wbar = match one_sided_beta(&p, sampled_level(1.0, step)) {
        Ok(o) => o.max_before + OVERSHOOT_BETA * step.sqrt(),
        Err(e) if e.is_growth() => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(PathOne { lil_sup, rho1, wbar })
}

/// Every closed-form tail bound at a fixed argument grid, against `n`
/// environments and `n` Brownian paths sampled on grid `step`.
pub fn analytic_bounds_suite(n: usize, step: f64, rng: &RngStream) -> Result<Vec<BoundCheck>> {
    if n < 8 {
        return Err(Error::Param(format!("need at least 8 samples, got {n}")));
    }
    let envs: Vec<LevelOne> = (0..n)
        .into_par_iter()
        .map(|i| level_one(step, &mut rng.fork(2 * i as u64)))
        .collect::<Result<_>>()?;
    let paths: Vec<PathOne> = (0..n)
        .into_par_iter()
        .map(|i| path_one(step, &mut rng.fork(2 * i as u64 + 1)))
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&LevelOne) -> bool| envs.iter().filter(|e| f(e)).count();
    let mut out = Vec::new();
    for x in [0.1, 0.25, 0.5] {
        out.push(BoundCheck::upper("w_sharp_prev_below", x, 4.0 * x.sqrt(), count(&|e| e.r_minus < x), n));
    }
    for x in [2.0, 3.0, 4.0, 5.0] {
        out.push(BoundCheck::upper("w_sharp_next_above", x, 2.0 * (2.0 + x) * (-x).exp(), count(&|e| e.r_plus > x), n));
    }
    for x in [0.1, 0.25, 0.5] {
        out.push(BoundCheck::upper("w_sharp_origin_below", x, 2.0 * x, count(&|e| e.w_sharp_b1_0 < x), n));
    }
    for x in [1.0, 2.0, 3.0] {
        out.push(BoundCheck::upper("w_sharp_origin_above", x, 6.0 * (-x).exp(), count(&|e| e.w_sharp_b1_0 > x), n));
    }
    for x in [0.5, 1.0, 2.0, 3.0] {
        out.push(BoundCheck::upper("abs_b1_above", x, 2.0 * (-x).exp(), count(&|e| e.b1.abs() > x), n));
    }
    let (c, m) = (1.2f64, 100.0f64);
    for a in [4.0, 5.0] {
        let bound = 4.0 * (m.ln() / c.ln() + 1.0) * (c / a) * (-0.5 * (a / c).powi(2)).exp();
        let hits = paths.iter().filter(|p| p.lil_sup >= a).count();
        out.push(BoundCheck::upper("sup_scaled_brownian", a, bound, hits, n));
    }
    for u in [1.0, 4.0, 16.0, 64.0] {
        let hits = paths.iter().filter(|p| p.rho1 > u).count();
        out.push(BoundCheck::upper("hitting_time_of_one_above", u, u.powf(-0.5), hits, n));
    }
    let heights: Vec<f64> = paths.iter().map(|p| p.wbar).filter(|w| w.is_finite()).collect();
    for x in [0.1, 0.25, 0.5, 0.75] {
        let hits = heights.iter().filter(|&&w| w < x).count();
        out.push(BoundCheck::equal("excursion_height_cdf", x, x - x * x.ln(), hits, heights.len()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ratio_tails() {
        let mut rng = RngStream::new(11, 0);
        let n = 10_000;
        let r: Vec<f64> = (0..n).map(|_| sample_ratio_r(&mut rng)).collect();
        let above_one = r.iter().filter(|&&x| x > 1.0).count() as f64 / n as f64;
        assert!((above_one - 0.5).abs() < 0.02);
        let (mut s2, mut t2) = (0, 0);
        for _ in 0..n {
            let (s, t) = sample_sigma_tau(&mut rng);
            assert!(s >= 1.0 && t >= 1.0);
            s2 += (s > 2.0) as usize;
            t2 += (t > 2.0) as usize;
        }
        assert!((s2 as f64 / n as f64 - 0.5).abs() < 0.02);
        assert!((t2 as f64 / n as f64 - 0.25).abs() < 0.02);
    }

    #[test]
    fn record_solver() {
        let (m, lo) = (0.2f64, 0.3f64);
        let c = lo.ln() - lo / m - 0.4;
        let x = solve_record(lo, m, c);
        assert_relative_eq!(x.ln() - x / m, c, epsilon = 1e-12);
    }

    #[test]
    fn no_jumps_below_one() {
        let mut rng = RngStream::new(1, 1);
        assert_eq!(sample_jump_count(1.0, &mut rng), 0);
        assert_eq!(sample_jump_count(0.5, &mut rng), 0);
    }

    #[test]
    fn density_normalization() {
        let stated = integrate_b1_density(B1Density::Stated);
        let rescaled = integrate_b1_density(B1Density::Rescaled);
        assert_relative_eq!(stated, std::f64::consts::PI.powi(2) / 8.0, epsilon = 1e-8);
        assert_relative_eq!(rescaled, 1.0, epsilon = 1e-8);
        // at 0 the series sums to (2/pi)(pi/4)
        assert_eq!(b1_density(0.0, B1Density::Rescaled), 0.5);
        assert_relative_eq!(b1_abs_cdf(60.0, B1Density::Rescaled), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn density_tail_decreases() {
        let mut last = f64::INFINITY;
        for i in 1..200 {
            let v = b1_density(0.05 * i as f64, B1Density::Rescaled);
            assert!(v < last);
            last = v;
        }
    }

    proptest! {
        #[test]
        fn chain_identities(seed in 0u64..1000, n in 1usize..40, h0 in 0.01f64..10.0) {
            let mut rng = RngStream::new(seed, 0);
            let c = RenewalChain::sample(h0, n, &mut rng).unwrap();
            for k in 0..n {
                prop_assert_eq!(c.h[k + 1], (1.0 + c.ratios[k]) * c.h[k]);
                prop_assert!(c.ratios[k] >= 0.0);
            }
            let d = SignedDepthChain::sample(h0, n, &mut rng).unwrap();
            let mut z = h0;
            for k in 0..n {
                prop_assert_eq!(d.zeta[2 * k + 1], d.sigma[k] * d.zeta[2 * k]);
                z = d.sigma[k] * z;
                z = d.tau[k] * z;
                prop_assert_eq!(d.zeta[2 * k + 2], z);
            }
        }

        #[test]
        fn density_symmetric_and_bounded(x in -20.0f64..20.0, terms in 1usize..80) {
            for v in [B1Density::Stated, B1Density::Rescaled] {
                let (a, e) = eval_b1_density(x, terms, v).unwrap();
                let (b, _) = eval_b1_density(-x, terms, v).unwrap();
                prop_assert_eq!(a, b);
                let (next, _) = eval_b1_density(x, terms + 1, v).unwrap();
                prop_assert!((next - a).abs() <= e + 1e-15 * a.abs().max(e));
            }
        }
    }
}

