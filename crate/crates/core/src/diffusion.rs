//! The diffusion `X_t = A^{-1}(B(T^{-1}(t)))` built from the scale function
//! `A` and the time change `T`.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::env::{GridPath, Side};
use crate::error::{Error, Result};
use crate::extrema::OVERSHOOT_BETA;
use crate::loctime::{LocalTimeProfile, Occupation, StopSpec};
use crate::rng::RngStream;

/// `A(x) = int_0^x e^{W(s) + shift} ds` on the knots of the environment.
///
/// `shift` is the constant added to `W` before exponentiating; values computed
/// with different shifts differ by the factor `e^{shift}` and must not be mixed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleFunction {
    step: f64,
    origin: usize,
    /// `W + shift` at the knots.
    w: Vec<f64>,
    a: Vec<f64>,
    shift: f64,
}

/// `int_0^{frac * step} e^{w1 + (w2 - w1) u / step} du`.
fn segment_integral(w1: f64, w2: f64, step: f64, frac: f64) -> f64 {
    let d = w2 - w1;
    if d == 0.0 {
        return step * frac * w1.exp();
    }
    step * w1.exp() * (d * frac).exp_m1() / d
}

impl ScaleFunction {
    pub fn new(env: &GridPath, shift: f64) -> Result<Self> {
        let w: Vec<f64> = env.values().iter().map(|v| v + shift).collect();
        if let Some(i) = w.iter().position(|&v| v > 700.0) {
            return Err(Error::Range(format!(
                "e^W overflows at knot {} (W = {}); recentre the environment",
                env.loc(i),
                env.value(i)
            )));
        }
        let o = env.origin_index();
        let step = env.step();
        let mut a = vec![0.0; w.len()];
        for i in o + 1..w.len() {
            a[i] = a[i - 1] + segment_integral(w[i - 1], w[i], step, 1.0);
        }
        for i in (0..o).rev() {
            a[i] = a[i + 1] - segment_integral(w[i], w[i + 1], step, 1.0);
        }
        Ok(ScaleFunction { step, origin: o, w, a, shift })
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.a
    }

    /// `W + shift` at the knots.
    pub fn shifted_w(&self) -> &[f64] {
        &self.w
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    pub fn loc(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) * self.step
    }

    pub fn lo(&self) -> f64 {
        self.loc(0)
    }

    pub fn hi(&self) -> f64 {
        self.loc(self.a.len() - 1)
    }

    /// Range of `A` over the domain.
    pub fn range(&self) -> (f64, f64) {
        (self.a[0], self.a[self.a.len() - 1])
    }

    /// `A(x)` at an arbitrary location, exact for the piecewise-linear `W`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let tol = 1e-9 * self.step;
        if !(x >= self.lo() - tol && x <= self.hi() + tol) {
            return Err(Error::Domain { x, lo: self.lo(), hi: self.hi() });
        }
        let u = x / self.step + self.origin as f64;
        let i = (u.floor().max(0.0) as usize).min(self.a.len() - 2);
        let f = (u - i as f64).clamp(0.0, 1.0);
        Ok(self.a[i] + segment_integral(self.w[i], self.w[i + 1], self.step, f))
    }

    /// `W(x) + shift` by linear interpolation.
    pub fn w_at(&self, x: f64) -> f64 {
        let u = x / self.step + self.origin as f64;
        let i = (u.floor().max(0.0) as usize).min(self.w.len() - 2);
        let f = (u - i as f64).clamp(0.0, 1.0);
        self.w[i] + f * (self.w[i + 1] - self.w[i])
    }

    /// Inverse on segment `i` (`a[i] <= v <= a[i + 1]`).
    fn invert_in(&self, i: usize, v: f64) -> f64 {
        let (w1, w2) = (self.w[i], self.w[i + 1]);
        let d = w2 - w1;
        let y = (v - self.a[i]) / (self.step * w1.exp());
        let f = if d == 0.0 { y } else { (y * d).ln_1p() / d };
        self.loc(i) + self.step * f.clamp(0.0, 1.0)
    }

    /// Segment index containing `v`, searching outward from `hint`.
    fn segment_near(&self, v: f64, hint: usize) -> Option<usize> {
        let n = self.a.len();
        if !(v >= self.a[0] && v <= self.a[n - 1]) {
            return None;
        }
        let mut i = hint.min(n - 2);
        let mut moves = 0;
        while !(self.a[i] <= v && v <= self.a[i + 1]) {
            if v < self.a[i] {
                i -= 1;
            } else {
                i += 1;
            }
            moves += 1;
            if moves > 64 {
                // far jump: fall back to bisection
                let j = self.a.partition_point(|&x| x <= v);
                return Some(j.saturating_sub(1).min(n - 2));
            }
        }
        Some(i)
    }
}

/// Scale function without recentring.
pub fn scale_function(env: &GridPath) -> Result<ScaleFunction> {
    ScaleFunction::new(env, 0.0)
}

/// Scale function of `W - max W`: never overflows.
pub fn scale_function_recentred(env: &GridPath) -> Result<ScaleFunction> {
    let m = env.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ScaleFunction::new(env, -m)
}

/// `A^{-1}(a)`.
pub fn inverse_scale(sf: &ScaleFunction, a: f64) -> Result<f64> {
    let (lo, hi) = sf.range();
    let i = sf
        .segment_near(a, sf.origin)
        .ok_or_else(|| Error::Range(format!("{a} outside the range [{lo}, {hi}] of A")))?;
    Ok(sf.invert_in(i, a))
}

/// Probability that the diffusion started at 0 hits `eta` before `y0`.
pub fn hit_probability(sf: &ScaleFunction, y0: f64, eta: f64) -> Result<f64> {
    if !(y0 < 0.0 && eta > 0.0) {
        return Err(Error::Param(format!("need y0 < 0 < eta, got y0={y0}, eta={eta}")));
    }
    let lo = sf.eval(y0)?.abs();
    let hi = sf.eval(eta)?;
    Ok(lo / (lo + hi))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// Diffusion-time step.
    pub dt: f64,
    pub seed: u64,
    pub stream_id: u64,
}

impl DiffusionPath {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "x"])?;
        for (t, x) in self.times.iter().zip(&self.positions) {
            out.serialize((t, x))?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Drives `B` and reports every step of `(T, X)` to `visit` until it returns
/// `false`. The step of `B` at `X = x` is `dt e^{2 (W + shift)(x)}`, so each step
/// advances the diffusion clock by about `dt` whatever the shift; `T`
/// accumulates the trapezoid of `e^{-2 (W + shift)(X)}`.
fn drive(
    sf: &ScaleFunction,
    dt: f64,
    rng: &mut RngStream,
    max_steps: u64,
    mut visit: impl FnMut(f64, f64, f64, f64) -> bool,
) -> Result<u64> {
    let (mut b, mut t, mut x) = (0.0f64, 0.0f64, 0.0f64);
    let mut seg = sf.origin.min(sf.a.len() - 2);
    let mut w = sf.w_at(0.0);
    let (alo, ahi) = sf.range();
    for n in 1..=max_steps {
        let db = dt * (2.0 * w).exp();
        let z: f64 = StandardNormal.sample(rng);
        b += db.sqrt() * z;
        if b <= alo || b >= ahi {
            let side = if b <= alo { Side::Left } else { Side::Right };
            let width = if b <= alo { -sf.lo() } else { sf.hi() };
            return Err(Error::GrowthLimit { side, width });
        }
        seg = sf.segment_near(b, seg).expect("b inside the range of A");
        let xn = sf.invert_in(seg, b);
        let wn = sf.w_at(xn);
        let tn = t + 0.5 * dt * (1.0 + (2.0 * (w - wn)).exp());
        if !visit(t, tn, x, xn) {
            return Ok(n);
        }
        t = tn;
        x = xn;
        w = wn;
    }
    Ok(max_steps)
}

/// Direct simulation on a uniform diffusion-time grid of step `dt` up to
/// `horizon`.
pub fn simulate_direct(env: &GridPath, horizon: f64, dt: f64, rng: &mut RngStream) -> Result<DiffusionPath> {
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::Param("horizon and dt must be positive".into()));
    }
    let sf = scale_function_recentred(env)?;
    let n_out = (horizon / dt).round() as usize;
    let mut times = Vec::with_capacity(n_out + 1);
    let mut positions = Vec::with_capacity(n_out + 1);
    times.push(0.0);
    positions.push(0.0);
    let (seed, stream_id) = (rng.seed(), rng.stream_id());
    drive(&sf, dt, rng, u64::MAX, |t0, t1, x0, x1| {
        // emit every grid time in (t0, t1] by linear interpolation of T^{-1}
        while times.len() <= n_out {
            let tg = times.len() as f64 * dt;
            if tg > t1 {
                break;
            }
            let f = if t1 > t0 { (tg - t0) / (t1 - t0) } else { 1.0 };
            times.push(tg);
            positions.push(x0 + f * (x1 - x0));
        }
        times.len() <= n_out
    })?;
    Ok(DiffusionPath { times, positions, dt, seed, stream_id })
}

/// Outcome of a run stopped on leaving `(lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExitRun {
    pub hit_hi: bool,
    pub time: f64,
    pub steps: u64,
    pub occupation: Option<LocalTimeProfile>,
}

/// Runs the diffusion until it leaves `(lo, hi)` (exit levels corrected for
/// discrete monitoring), optionally accumulating the occupation density in
/// bins of width `bin_width`. Fails after `max_steps` steps (of diffusion
/// time about `dt` each) without exit.
pub fn simulate_to_exit(
    env: &GridPath,
    lo: f64,
    hi: f64,
    dt: f64,
    max_steps: u64,
    bin_width: Option<f64>,
    rng: &mut RngStream,
) -> Result<ExitRun> {
    if !(lo < 0.0 && hi > 0.0) {
        return Err(Error::Param(format!("need lo < 0 < hi, got ({lo}, {hi})")));
    }
    let sf = scale_function_recentred(env)?;
    // crossings between steps go unseen: pull each exit level in by the mean
    // overshoot of B there
    let pull = |x: f64, sign: f64| -> Result<f64> {
        let sd = (dt * (2.0 * sf.w_at(x)).exp()).sqrt();
        inverse_scale(&sf, sf.eval(x)? - sign * OVERSHOOT_BETA * sd)
    };
    let (lo_in, hi_in) = (pull(lo, -1.0)?, pull(hi, 1.0)?);
    let mut occ = bin_width.map(Occupation::new).transpose()?;
    let mut exit = None;
    let steps = drive(&sf, dt, rng, max_steps, |t0, t1, x0, x1| {
        if let Some(o) = occ.as_mut() {
            o.add(x0, t1 - t0);
        }
        if x1 >= hi_in || x1 <= lo_in {
            exit = Some((x1 >= hi_in, t1));
            return false;
        }
        true
    })?;
    let (hit_hi, time) = exit.ok_or_else(|| Error::GrowthLimit { side: Side::Right, width: hi })?;
    let stop = StopSpec::Exit { lo, hi };
    Ok(ExitRun { hit_hi, time, steps, occupation: occ.map(|o| o.into_profile(stop)) })
}

/// Occupation density of a simulated path: the time spent in each bin of
/// width `bin_width` (bins centred on multiples of the width), divided by the
/// width. The interval `[t_k, t_{k+1}]` is charged to the bin of `X(t_k)`.
pub fn occupation_local_time(dp: &DiffusionPath, bin_width: f64) -> Result<LocalTimeProfile> {
    if dp.times.is_empty() {
        return Err(Error::Param("empty path".into()));
    }
    let mut occ = Occupation::new(bin_width)?;
    for k in 0..dp.times.len() - 1 {
        occ.add(dp.positions[k], dp.times[k + 1] - dp.times[k]);
    }
    let horizon = *dp.times.last().unwrap();
    if dp.times.len() == 1 {
        occ.add(dp.positions[0], 0.0);
    }
    Ok(occ.into_profile(StopSpec::Fixed { t: horizon }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_environment;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn flat() -> GridPath {
        GridPath::from_fn(0.01, 500, 500, |_| 0.0).unwrap()
    }

    #[test]
    fn flat_and_linear_scale() {
        let sf = scale_function(&flat()).unwrap();
        for i in (0..1001).step_by(37) {
            assert_relative_eq!(sf.values()[i], sf.loc(i), epsilon = 1e-12);
        }
        assert_relative_eq!(inverse_scale(&sf, 0.37).unwrap(), 0.37, epsilon = 1e-12);
        let lin = GridPath::from_fn(0.01, 300, 300, |x| x).unwrap();
        let sf = scale_function(&lin).unwrap();
        for x in [-2.5, -1.0, 0.5, 1.0, 2.99] {
            assert_relative_eq!(sf.eval(x).unwrap(), x.exp() - 1.0, max_relative = 1e-12);
        }
        assert_relative_eq!(inverse_scale(&sf, 1f64.exp() - 1.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(inverse_scale(&sf, 100.0).is_err());
    }

    #[test]
    fn hit_probability_closed_form() {
        let sf = scale_function(&flat()).unwrap();
        assert_relative_eq!(hit_probability(&sf, -1.0, 1.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(hit_probability(&sf, -2.0, 1.0).unwrap(), 2.0 / 3.0, epsilon = 1e-12);
        assert!(hit_probability(&sf, 1.0, 2.0).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let p = GridPath::from_fn(1.0, 0, 800, |x| x).unwrap();
        assert!(matches!(scale_function(&p), Err(Error::Range(_))));
        assert!(scale_function_recentred(&p).is_ok());
    }

    #[test]
    fn flat_env_gives_brownian_motion() {
        let env = flat();
        let n = 10_000u64;
        let mut s = 0.0;
        for i in 0..n {
            let dp = simulate_direct(&env, 1.0, 0.01, &mut RngStream::new(5, i)).unwrap();
            assert_eq!(dp.times.len(), 101);
            s += dp.positions[100].powi(2);
        }
        assert!((s / n as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn direct_is_deterministic() {
        let env = sample_environment(&mut RngStream::new(1, 0), 0.01, 5.0).unwrap();
        let a = simulate_direct(&env, 2.0, 1e-3, &mut RngStream::new(2, 0)).unwrap();
        let b = simulate_direct(&env, 2.0, 1e-3, &mut RngStream::new(2, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wedge_confines() {
        // W = 4|x| near 0 with walls: the diffusion stays in the well
        let env = GridPath::from_fn(0.01, 600, 600, |x| 4.0 * x.abs()).unwrap();
        let mut inside = 0;
        for i in 0..200u64 {
            let dp = simulate_direct(&env, 20.0, 1e-3, &mut RngStream::new(8, i)).unwrap();
            if dp.positions.last().unwrap().abs() < 1.0 {
                inside += 1;
            }
        }
        assert!(inside as f64 / 200.0 > 0.95);
    }

    #[test]
    fn occupation_conserves_time() {
        let dp = simulate_direct(&flat(), 1.0, 1e-3, &mut RngStream::new(3, 3)).unwrap();
        let prof = occupation_local_time(&dp, 0.05).unwrap();
        assert!((prof.integral() - 1.0).abs() < 1e-9);
        let still = DiffusionPath { times: vec![0.0, 0.5, 1.0], positions: vec![0.0; 3], dt: 0.5, seed: 0, stream_id: 0 };
        let prof = occupation_local_time(&still, 0.1).unwrap();
        assert_eq!(prof.values.len(), 1);
        assert_relative_eq!(prof.values[0], 10.0);
    }

    #[test]
    fn exit_run_stops_at_boundary() {
        let run = simulate_to_exit(&flat(), -1.0, 1.0, 1e-4, u64::MAX, Some(0.1), &mut RngStream::new(1, 1)).unwrap();
        let occ = run.occupation.unwrap();
        assert!((occ.integral() - run.time).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn inverse_round_trip(seed in 0u64..10_000, q in 0.0f64..1.0) {
            let env = sample_environment(&mut RngStream::new(seed, 0), 0.01, 4.0).unwrap();
            let sf = scale_function(&env).unwrap();
            let (lo, hi) = sf.range();
            let a = lo + q * (hi - lo);
            let x = inverse_scale(&sf, a).unwrap();
            let back = sf.eval(x).unwrap();
            prop_assert!((back - a).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn scale_signs(seed in 0u64..10_000, x in 0.01f64..4.0) {
            let env = sample_environment(&mut RngStream::new(seed, 1), 0.01, 4.0).unwrap();
            let sf = scale_function(&env).unwrap();
            prop_assert!(sf.eval(-x).unwrap() < 0.0 && sf.eval(x).unwrap() > 0.0);
            prop_assert!(sf.values().windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn hit_probability_ignores_constants(seed in 0u64..10_000, c in -30.0f64..30.0) {
            let env = sample_environment(&mut RngStream::new(seed, 2), 0.01, 4.0).unwrap();
            let p = hit_probability(&scale_function(&env).unwrap(), -1.5, 2.0).unwrap();
            let q = hit_probability(&scale_function(&env.shifted(c)).unwrap(), -1.5, 2.0).unwrap();
            let r = hit_probability(&scale_function_recentred(&env).unwrap(), -1.5, 2.0).unwrap();
            prop_assert!((p - q).abs() < 1e-12 && (p - r).abs() < 1e-12);
        }
    }
}
