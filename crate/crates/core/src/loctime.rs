//! Local-time profiles at hitting times via the Ray–Knight representation,
//! and the favorite point.
//!
//! For a Brownian motion started at `c` and stopped at its first hit of
//! `t > c`, the local time `y -> L(y)` is a squared Bessel process of
//! dimension 2 started from 0 at `y = t` and run backwards to `y = c`, then of
//! dimension 0 below `c` until it is absorbed (at the running minimum).
//! Mapping through the scale function gives the local time of the diffusion:
//! `L_X(x) = e^{-W(x)} L_B(A(x))`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;

use crate::diffusion::{inverse_scale, scale_function_recentred, ScaleFunction};
use crate::env::{GridPath, Side};
use crate::error::{Error, Result};
use crate::extrema::Landmarks;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StopSpec {
    /// First hitting time of `target`, with the diffusion time when known.
    Hitting { target: f64, time: Option<f64> },
    Fixed { t: f64 },
    Exit { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Direct,
    RayKnight,
}

/// Local time of the diffusion over space.
///
/// With `bin_width = Some(w)` the profile is a histogram whose bins are
/// centred on `grid`; otherwise it is piecewise linear between the knots of
/// `grid`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalTimeProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bin_width: Option<f64>,
    pub stop: StopSpec,
    pub source: Source,
}

impl LocalTimeProfile {
    /// `int L(x) dx`, i.e. the elapsed diffusion time.
    pub fn integral(&self) -> f64 {
        match self.bin_width {
            Some(w) => self.values.iter().sum::<f64>() * w,
            None => self
                .grid
                .windows(2)
                .zip(self.values.windows(2))
                .map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1]))
                .sum(),
        }
    }

    /// Average of the profile over `[lo, hi]`.
    pub fn bin_average(&self, lo: f64, hi: f64) -> f64 {
        assert!(hi > lo, "empty averaging window");
        let mut acc = 0.0;
        match self.bin_width {
            Some(w) => {
                for (g, v) in self.grid.iter().zip(&self.values) {
                    let overlap = (hi.min(g + 0.5 * w) - lo.max(g - 0.5 * w)).max(0.0);
                    acc += overlap * v;
                }
            }
            None => {
                for (g, v) in self.grid.windows(2).zip(self.values.windows(2)) {
                    let (a, b) = (lo.max(g[0]), hi.min(g[1]));
                    if b <= a {
                        continue;
                    }
                    let at = |x: f64| v[0] + (v[1] - v[0]) * (x - g[0]) / (g[1] - g[0]);
                    acc += 0.5 * (b - a) * (at(a) + at(b));
                }
            }
        }
        acc / (hi - lo)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "local_time"])?;
        for (x, v) in self.grid.iter().zip(&self.values) {
            out.serialize((x, v))?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Streaming occupation histogram with bins centred on multiples of `width`.
#[derive(Clone, Debug)]
pub struct Occupation {
    width: f64,
    first: i64,
    time: Vec<f64>,
}

impl Occupation {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::Param(format!("bin width must be positive, got {width}")));
        }
        Ok(Occupation { width, first: 0, time: Vec::new() })
    }

    pub fn add(&mut self, x: f64, dt: f64) {
        let k = (x / self.width + 0.5).floor() as i64;
        if self.time.is_empty() {
            self.first = k;
            self.time.push(0.0);
        }
        if k < self.first {
            let grow = (self.first - k) as usize;
            let mut v = vec![0.0; grow];
            v.extend_from_slice(&self.time);
            self.time = v;
            self.first = k;
        }
        let j = (k - self.first) as usize;
        if j >= self.time.len() {
            self.time.resize(j + 1, 0.0);
        }
        self.time[j] += dt;
    }

    pub fn into_profile(self, stop: StopSpec) -> LocalTimeProfile {
        let w = self.width;
        let grid = (0..self.time.len()).map(|j| (self.first + j as i64) as f64 * w).collect();
        let values = self.time.iter().map(|t| t / w).collect();
        LocalTimeProfile { grid, values, bin_width: Some(w), stop, source: Source::Direct }
    }
}

/// One exact transition of a squared Bessel process of dimension `dim` over
/// time `t`, from `x`: `Gamma(dim/2 + N, 2t)` with `N ~ Poisson(x / 2t)`.
pub fn besq_step<R: Rng + ?Sized>(dim: u32, x: f64, t: f64, rng: &mut R) -> f64 {
    if t <= 0.0 {
        return x;
    }
    let lambda = x / (2.0 * t);
    let n = if lambda > 1e12 {
        // beyond the Poisson sampler's range; relative fluctuations are 1e-6
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        (lambda + lambda.sqrt() * z).round()
    } else if lambda > 0.0 {
        Poisson::new(lambda).expect("finite Poisson mean").sample(rng)
    } else {
        0.0
    };
    let shape = 0.5 * dim as f64 + n;
    if shape == 0.0 {
        return 0.0;
    }
    Gamma::new(shape, 2.0 * t).expect("positive gamma parameters").sample(rng)
}

fn check_dim(dim: u32) -> Result<()> {
    if dim != 0 && dim != 2 {
        return Err(Error::Param(format!("dimension must be 0 or 2, got {dim}")));
    }
    Ok(())
}

/// Squared Bessel path on the grid `0, grid_step, ..., length`.
pub fn sample_besq(dim: u32, start: f64, grid_step: f64, length: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_dim(dim)?;
    if !(start >= 0.0) {
        return Err(Error::Param(format!("start must be nonnegative, got {start}")));
    }
    if !(grid_step > 0.0 && length > 0.0) {
        return Err(Error::Param("grid_step and length must be positive".into()));
    }
    let n = (length / grid_step).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut z = start;
    out.push(z);
    for _ in 0..n {
        z = besq_step(dim, z, grid_step, rng);
        out.push(z);
    }
    Ok(out)
}

/// A dimension-2 and a dimension-0 path from the same start, coupled so that
/// the first dominates the second: the dimension-2 path is the
/// dimension-0 path plus an independent dimension-2 path from 0.
pub fn sample_besq_coupled(start: f64, grid_step: f64, length: f64, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    let zero = sample_besq(0, start, grid_step, length, rng)?;
    let extra = sample_besq(2, 0.0, grid_step, length, rng)?;
    let two = zero.iter().zip(&extra).map(|(a, b)| a + b).collect();
    Ok((two, zero))
}

/// `L_X(tau(eta), x)` at the points of `space_grid`: a dimension-2 squared
/// Bessel process in `u = A(eta) - A(x)` for `0 <= u <= A(eta)`, continued with
/// dimension 0 for larger `u` (negative `x`), times `e^{-W(x)}`.
pub fn ray_knight_profile(env: &GridPath, eta: f64, space_grid: &[f64], rng: &mut RngStream) -> Result<LocalTimeProfile> {
    if !(eta > 0.0) || eta > env.hi() {
        return Err(Error::Param(format!("eta must lie in (0, {}], got {eta}", env.hi())));
    }
    let sf = scale_function_recentred(env)?;
    let a = sf.eval(eta)?;
    let mut order: Vec<usize> = (0..space_grid.len()).collect();
    order.sort_by(|&i, &j| space_grid[j].total_cmp(&space_grid[i]));
    let mut values = vec![0.0; space_grid.len()];
    let (mut u, mut z) = (0.0f64, 0.0f64);
    for i in order {
        let x = space_grid[i];
        if x >= eta {
            continue;
        }
        let un = a - sf.eval(x)?;
        if u < a && un > a {
            z = besq_step(2, z, a - u, rng);
            z = besq_step(0, z, un - a, rng);
        } else {
            z = besq_step(if un <= a { 2 } else { 0 }, z, un - u, rng);
        }
        u = un;
        values[i] = (-sf.w_at(x)).exp() * z;
    }
    Ok(LocalTimeProfile {
        grid: space_grid.to_vec(),
        values,
        bin_width: None,
        stop: StopSpec::Hitting { target: eta, time: None },
        source: Source::RayKnight,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FavoriteRecord {
    pub stop: StopSpec,
    /// Smallest location attaining the maximum.
    pub location: f64,
    pub max_value: f64,
    /// Maximum minus the best value at any other grid point.
    pub runner_up_gap: f64,
}

fn favorite_of(grid: &[f64], values: &[f64], stop: StopSpec) -> Result<FavoriteRecord> {
    let mut best = 0usize;
    for i in 1..values.len() {
        if values[i] > values[best] || (values[i] == values[best] && grid[i] < grid[best]) {
            best = i;
        }
    }
    if values.is_empty() || !(values[best] > 0.0) {
        return Err(Error::Degenerate("local-time profile is identically zero".into()));
    }
    let second = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &v)| v)
        .fold(0.0f64, f64::max);
    Ok(FavoriteRecord { stop, location: grid[best], max_value: values[best], runner_up_gap: values[best] - second })
}

pub fn favorite_point(profile: &LocalTimeProfile) -> Result<FavoriteRecord> {
    favorite_of(&profile.grid, &profile.values, profile.stop)
}

/// History of one diffusion observed at a sequence of hitting times.
///
/// Each move to a new target knot adds an independent Ray–Knight increment to
/// the Brownian local time, so the profiles at successive targets belong to a
/// single path. Targets are environment knots.
pub struct Skeleton {
    sf: ScaleFunction,
    lb: Vec<f64>,
    cur: usize,
    lo_seen: usize,
    hi_seen: usize,
}

/// Extent of the driving path during one move, as knot indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Leg {
    pub lowest: usize,
    pub highest: usize,
}

impl Skeleton {
    pub fn new(env: &GridPath) -> Result<Self> {
        let sf = scale_function_recentred(env)?;
        let o = sf.origin_index();
        Ok(Skeleton { lb: vec![0.0; sf.values().len()], sf, cur: o, lo_seen: o, hi_seen: o })
    }

    pub fn scale(&self) -> &ScaleFunction {
        &self.sf
    }

    pub fn knot(&self, x: f64) -> Result<usize> {
        let u = x / self.sf.step() + self.sf.origin_index() as f64;
        let k = u.round();
        if k < 0.0 || k as usize >= self.lb.len() {
            return Err(Error::Domain { x, lo: self.sf.lo(), hi: self.sf.hi() });
        }
        Ok(k as usize)
    }

    pub fn position(&self) -> f64 {
        self.sf.loc(self.cur)
    }

    /// Moves the diffusion to knot `target` (its first hitting time after the
    /// current one).
    pub fn advance(&mut self, target: usize, rng: &mut RngStream) -> Result<Leg> {
        let y = self.sf.values();
        let (c, t) = (self.cur, target);
        let n = y.len();
        if t >= n {
            return Err(Error::Domain { x: self.sf.loc(t.min(n - 1)), lo: self.sf.lo(), hi: self.sf.hi() });
        }
        if t == c {
            return Ok(Leg { lowest: c, highest: c });
        }
        let mut z = 0.0;
        let leg = if t > c {
            let mut i = t;
            while i > 0 {
                let dim = if i > c { 2 } else { 0 };
                z = besq_step(dim, z, y[i] - y[i - 1], rng);
                i -= 1;
                if dim == 0 && z == 0.0 {
                    break;
                }
                self.lb[i] += z;
            }
            if z > 0.0 {
                return Err(Error::GrowthLimit { side: Side::Left, width: -self.sf.lo() });
            }
            // local time vanishes at knot i: the minimum lies above it
            Leg { lowest: i + 1, highest: t }
        } else {
            let mut i = t;
            while i + 1 < n {
                let dim = if i < c { 2 } else { 0 };
                z = besq_step(dim, z, y[i + 1] - y[i], rng);
                i += 1;
                if dim == 0 && z == 0.0 {
                    break;
                }
                self.lb[i] += z;
            }
            if z > 0.0 {
                return Err(Error::GrowthLimit { side: Side::Right, width: self.sf.hi() });
            }
            Leg { lowest: t, highest: i - 1 }
        };
        self.lo_seen = self.lo_seen.min(leg.lowest);
        self.hi_seen = self.hi_seen.max(leg.highest);
        self.cur = t;
        Ok(leg)
    }

    fn lx(&self, i: usize) -> f64 {
        (-self.sf.shifted_w()[i]).exp() * self.lb[i]
    }

    /// Elapsed diffusion time: the integral of the local-time profile.
    pub fn time(&self) -> f64 {
        let h = self.sf.step();
        (self.lo_seen..self.hi_seen).map(|i| 0.5 * h * (self.lx(i) + self.lx(i + 1))).sum()
    }

    pub fn favorite(&self) -> Result<FavoriteRecord> {
        let grid: Vec<f64> = (self.lo_seen..=self.hi_seen).map(|i| self.sf.loc(i)).collect();
        let vals: Vec<f64> = (self.lo_seen..=self.hi_seen).map(|i| self.lx(i)).collect();
        let stop = StopSpec::Hitting { target: self.position(), time: Some(self.time()) };
        favorite_of(&grid, &vals, stop)
    }

    pub fn profile(&self) -> LocalTimeProfile {
        let grid = (self.lo_seen..=self.hi_seen).map(|i| self.sf.loc(i)).collect();
        let values = (self.lo_seen..=self.hi_seen).map(|i| self.lx(i)).collect();
        LocalTimeProfile {
            grid,
            values,
            bin_width: None,
            stop: StopSpec::Hitting { target: self.position(), time: Some(self.time()) },
            source: Source::RayKnight,
        }
    }

    /// Knots `p_0 = from, p_1, ..., p_N = to` with
    /// `A(p_k) - A(base) = 2^{k / refine} (A(from) - A(base))`, the last one
    /// replaced by `to`. `from` and `to` must lie on the same side of `base`,
    /// `to` farther out.
    pub fn ladder(&self, base: usize, from: usize, to: usize, refine: u32) -> Result<Vec<usize>> {
        let y = self.sf.values();
        let (ab, d0, dn) = (y[base], y[from] - y[base], y[to] - y[base]);
        if d0 == 0.0 || d0.signum() != dn.signum() || dn.abs() < d0.abs() {
            return Err(Error::Degenerate("ladder endpoints out of order".into()));
        }
        let ratio = 2f64.powf(1.0 / refine.max(1) as f64);
        let mut out = vec![from];
        let mut k = 1;
        loop {
            let d = d0 * ratio.powi(k);
            if d.abs() >= dn.abs() {
                break;
            }
            let x = inverse_scale(&self.sf, ab + d)?;
            let i = self.knot(x)?;
            if i != *out.last().unwrap() && i != to {
                out.push(i);
            }
            k += 1;
        }
        if to != *out.last().unwrap() {
            out.push(to);
        }
        Ok(out)
    }
}

/// Favorite points along the hitting ladder between `zeta_r` and `eta_r`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LadderRun {
    pub records: Vec<FavoriteRecord>,
    /// The diffusion reached `eta_r` before `zeta_r`.
    pub eta_first: bool,
}

/// Runs one diffusion from 0 to `zeta_r` and then along the doubling ladder
/// to `eta_r`, recording the favorite point at each rung. When `b_{r++}`
/// lies across the origin the path goes `zeta_r -> zeta_tilde` first and the
/// ladder runs from `zeta_tilde` to `eta_r`.
pub fn favorite_at_hitting_ladder(env: &GridPath, lm: &Landmarks, rng: &mut RngStream) -> Result<LadderRun> {
    let mut sk = Skeleton::new(env)?;
    run_ladder(&mut sk, lm, 1, rng)
}

/// [`favorite_at_hitting_ladder`] on an existing skeleton, with `refine`
/// rungs per doubling.
pub fn run_ladder(sk: &mut Skeleton, lm: &Landmarks, refine: u32, rng: &mut RngStream) -> Result<LadderRun> {
    let zeta = sk.knot(lm.zeta_r)?;
    let eta = sk.knot(lm.eta_r)?;
    let base = sk.knot(lm.b_r)?;
    let leg = sk.advance(zeta, rng)?;
    // the path is continuous: eta was hit iff it lies within the first leg's range
    let eta_first = eta != zeta && leg.lowest <= eta && eta <= leg.highest;
    let mut records = vec![sk.favorite()?];
    if eta_first {
        return Ok(LadderRun { records, eta_first });
    }
    let start = match lm.zeta_tilde {
        Some(zt) => {
            let k = sk.knot(zt)?;
            sk.advance(k, rng)?;
            records.push(sk.favorite()?);
            k
        }
        None => zeta,
    };
    // with small constants the start can lie beyond eta; go there directly
    let rungs = sk.ladder(base, start, eta, refine).unwrap_or_else(|_| vec![start, eta]);
    let rungs: Vec<usize> = rungs.into_iter().filter(|&k| k != start).collect();
    for &k in &rungs {
        sk.advance(k, rng)?;
        records.push(sk.favorite()?);
    }
    Ok(LadderRun { records, eta_first })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn besq2_from_zero_is_exponential() {
        let mut rng = RngStream::new(4, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_besq(2, 0.0, 1.0, 1.0, &mut rng).unwrap()[1]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.06);
        // P(Z > 2) = e^{-1}
        let tail = xs.iter().filter(|&&x| x > 2.0).count() as f64 / n as f64;
        assert!((tail - (-1f64).exp()).abs() < 0.015);
    }

    #[test]
    fn besq0_absorbed_at_zero() {
        let mut rng = RngStream::new(4, 1);
        assert!(sample_besq(0, 0.0, 0.1, 5.0, &mut rng).unwrap().iter().all(|&z| z == 0.0));
        let path = sample_besq(0, 1.0, 0.1, 50.0, &mut rng).unwrap();
        let first_zero = path.iter().position(|&z| z == 0.0).unwrap();
        assert!(path[first_zero..].iter().all(|&z| z == 0.0));
        assert!(sample_besq(0, -1.0, 0.1, 1.0, &mut rng).is_err());
        assert!(sample_besq(1, 1.0, 0.1, 1.0, &mut rng).is_err());
    }

    #[test]
    fn coupled_paths_are_ordered() {
        let mut rng = RngStream::new(4, 2);
        for _ in 0..100 {
            let (two, zero) = sample_besq_coupled(3.0, 0.05, 4.0, &mut rng).unwrap();
            assert!(two.iter().zip(&zero).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn flat_profile_mean() {
        let env = GridPath::from_fn(0.05, 100, 100, |_| 0.0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let n = 10_000;
        let mut acc = vec![0.0; grid.len()];
        for i in 0..n {
            let p = ray_knight_profile(&env, 1.0, &grid, &mut RngStream::new(6, i)).unwrap();
            assert_eq!(*p.values.last().unwrap(), 0.0);
            for (a, v) in acc.iter_mut().zip(&p.values) {
                *a += v;
            }
        }
        for (x, a) in grid.iter().zip(&acc) {
            if *x < 0.95 {
                let want = 2.0 * (1.0 - x);
                assert!((a / n as f64 - want).abs() < 0.045 * want, "x={x} got {}", a / n as f64);
            }
        }
    }

    #[test]
    fn favorite_rules() {
        let stop = StopSpec::Fixed { t: 1.0 };
        let p = LocalTimeProfile {
            grid: vec![-1.0, 0.0, 2.5, 3.0],
            values: vec![1.0, 0.5, 4.0, 1.0],
            bin_width: None,
            stop,
            source: Source::Direct,
        };
        let f = favorite_point(&p).unwrap();
        assert_eq!(f.location, 2.5);
        assert_relative_eq!(f.runner_up_gap, 3.0);
        let tie = LocalTimeProfile { values: vec![4.0, 0.5, 1.0, 4.0], ..p.clone() };
        assert_eq!(favorite_point(&tie).unwrap().location, -1.0);
        let shifted = LocalTimeProfile { values: p.values.iter().map(|v| v + 7.0).collect(), ..p.clone() };
        assert_eq!(favorite_point(&shifted).unwrap().location, 2.5);
        let zero = LocalTimeProfile { values: vec![0.0; 4], ..p };
        assert!(favorite_point(&zero).is_err());
    }

    #[test]
    fn skeleton_time_matches_profile_integral() {
        let env = GridPath::from_fn(0.01, 20_000, 20_000, |x| (3.0 * x).sin()).unwrap();
        let mut sk = Skeleton::new(&env).unwrap();
        let mut rng = RngStream::new(1, 9);
        let t1 = sk.knot(1.0).unwrap();
        sk.advance(t1, &mut rng).unwrap();
        // nothing to the right of the first target is visited before it is hit
        let p = sk.profile();
        assert!(p.grid.iter().zip(&p.values).all(|(x, v)| *x <= 1.0 + 1e-9 || *v == 0.0));
        let t2 = sk.knot(-0.5).unwrap();
        sk.advance(t2, &mut rng).unwrap();
        let p = sk.profile();
        assert_relative_eq!(p.integral(), sk.time(), max_relative = 1e-12);
    }

    #[test]
    fn ladder_doubles() {
        let env = GridPath::from_fn(0.001, 3000, 3000, |_| 0.0).unwrap();
        let sk = Skeleton::new(&env).unwrap();
        let (b, z, e) = (sk.knot(0.1).unwrap(), sk.knot(0.2).unwrap(), sk.knot(2.0).unwrap());
        let rungs = sk.ladder(b, z, e, 1).unwrap();
        // (A(eta) - A(b)) / (A(zeta) - A(b)) = 19: N = 5
        assert_eq!(rungs.len(), 6);
        assert_relative_eq!(sk.scale().loc(rungs[1]), 0.3, epsilon = 1e-9);
        assert_relative_eq!(sk.scale().loc(rungs[4]), 1.7, epsilon = 1e-9);
        assert!(sk.ladder(b, e, z, 1).is_err());
    }
}
