//! Sinai's walk on an integer window: a nearest-neighbour walk in a random
//! potential, with visit counts and the most visited site.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::env::{GridPath, Side};
use crate::error::{Error, Result};
use crate::extrema::{compute_b, find_x_extrema, w_sharp};
use crate::rng::RngStream;

/// Potential `V` on the sites `lo..=lo + len - 1`, with `V(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntEnvironment {
    potential: Vec<f64>,
    lo: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Increments {
    /// Fair `+-1` steps.
    Coin,
    Gaussian,
}

impl IntEnvironment {
    pub fn from_potential(lo: i64, potential: Vec<f64>) -> Result<Self> {
        if lo > 0 || lo + potential.len() as i64 <= 0 {
            return Err(Error::Param("window must contain site 0".into()));
        }
        if potential.len() < 3 {
            return Err(Error::Param("window needs at least 3 sites".into()));
        }
        let v0 = potential[(-lo) as usize];
        if v0 != 0.0 {
            return Err(Error::Param(format!("potential must vanish at 0, got {v0}")));
        }
        Ok(IntEnvironment { potential, lo })
    }

    /// Potential of slope `slope` per site with bottoms at 0 and at
    /// `2 w + d` (`slope d` lower), a peak `slope w` high at `w` between them
    /// and outer walls `3 slope w` above each bottom.
    pub fn two_valley(w: i64, d: i64, slope: f64) -> Result<Self> {
        if w < 1 || d < 1 || !(slope > 0.0) {
            return Err(Error::Param("widths and slope must be positive".into()));
        }
        let (b2, wall) = (2 * w + d, 3 * w);
        let v = (-wall..=b2 + wall)
            .map(|x| {
                let y = if x <= w { x.abs() } else if x <= b2 { 2 * w - x } else { x - 2 * b2 + 2 * w };
                slope * y as f64
            })
            .collect();
        Self::from_potential(-wall, v)
    }

    /// Random potential on `[-half_width, half_width]`.
    pub fn sample(kind: Increments, half_width: usize, rng: &mut RngStream) -> Result<Self> {
        if half_width == 0 {
            return Err(Error::Param("half_width must be positive".into()));
        }
        let step = |rng: &mut RngStream| match kind {
            Increments::Coin => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Increments::Gaussian => StandardNormal.sample(rng),
        };
        let mut right = vec![0.0];
        for _ in 0..half_width {
            let v = right[right.len() - 1] + step(rng);
            right.push(v);
        }
        let mut left = vec![0.0];
        for _ in 0..half_width {
            let v = left[left.len() - 1] + step(rng);
            left.push(v);
        }
        left.reverse();
        left.pop();
        left.extend(right);
        Self::from_potential(-(half_width as i64), left)
    }

    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.potential.len() as i64 - 1
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn at(&self, x: i64) -> f64 {
        self.potential[(x - self.lo) as usize]
    }

    /// The potential as a piecewise-linear path with unit step.
    pub fn to_path(&self) -> GridPath {
        GridPath::from_values(1.0, self.potential.clone(), (-self.lo) as usize).expect("valid window")
    }

    /// [`Self::to_path`] with a steep drop just outside each end, so that the
    /// window edges act as walls of the outermost valleys.
    fn walled_path(&self) -> GridPath {
        let mut v = Vec::with_capacity(self.potential.len() + 2);
        v.push(self.potential[0] - WALL_DROP);
        v.extend_from_slice(&self.potential);
        v.push(self.potential[self.potential.len() - 1] - WALL_DROP);
        GridPath::from_values(1.0, v, (1 - self.lo) as usize).expect("valid window")
    }

    /// `P(x -> x + 1)`: weights `e^{-(V(x +- 1) - V(x)) / 2}` normalized, so
    /// the walk is reversible with respect to `(e^{-dV_+/2} + e^{-dV_-/2}) e^{-V}`
    /// and crosses a barrier of height `H` in time of order `e^H`.
    pub fn p_right(&self, x: i64) -> f64 {
        let v = self.at(x);
        let up = (-(self.at(x + 1) - v) / 2.0).exp();
        let down = (-(self.at(x - 1) - v) / 2.0).exp();
        up / (up + down)
    }
}

const WALL_DROP: f64 = 1e6;

/// Visit counts and favorite sites of one walk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkTrace {
    pub checkpoints: Vec<u64>,
    /// Smallest most-visited site at each checkpoint.
    pub favorites: Vec<i64>,
    pub max_counts: Vec<u64>,
    pub positions: Vec<i64>,
    /// Visits of `X_1, ..., X_n` at the last checkpoint, indexed from `lo`.
    pub counts: Vec<u64>,
    pub lo: i64,
}

impl WalkTrace {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["checkpoint", "favorite", "max_count", "position"])?;
        for k in 0..self.checkpoints.len() {
            out.serialize((self.checkpoints[k], self.favorites[k], self.max_counts[k], self.positions[k]))?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Runs the walk from 0 for `checkpoints.last()` steps.
pub fn sample_walk(env: &IntEnvironment, checkpoints: &[u64], rng: &mut RngStream) -> Result<WalkTrace> {
    if checkpoints.is_empty() || checkpoints[0] < 1 || checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Param("checkpoints must be increasing and start at >= 1".into()));
    }
    let n = env.potential.len();
    // probabilities cached per site; the walk never evaluates the boundary sites
    let pr: Vec<f64> = (1..n - 1).map(|i| env.p_right(env.lo + i as i64)).collect();
    let mut counts = vec![0u64; n];
    let (mut i, mut fav, mut max) = ((-env.lo) as usize, usize::MAX, 0u64);
    let mut trace = WalkTrace {
        checkpoints: checkpoints.to_vec(),
        favorites: Vec::with_capacity(checkpoints.len()),
        max_counts: Vec::with_capacity(checkpoints.len()),
        positions: Vec::with_capacity(checkpoints.len()),
        counts: Vec::new(),
        lo: env.lo,
    };
    let mut next = 0;
    for step in 1..=*checkpoints.last().unwrap() {
        if rng.random::<f64>() < pr[i - 1] {
            i += 1;
        } else {
            i -= 1;
        }
        if i == 0 || i == n - 1 {
            let side = if i == 0 { Side::Left } else { Side::Right };
            return Err(Error::GrowthLimit { side, width: (n / 2) as f64 });
        }
        counts[i] += 1;
        if counts[i] > max || (counts[i] == max && i < fav) {
            max = counts[i];
            fav = i;
        }
        if step == checkpoints[next] {
            trace.favorites.push(env.lo + fav as i64);
            trace.max_counts.push(max);
            trace.positions.push(env.lo + i as i64);
            next += 1;
        }
    }
    trace.counts = counts;
    Ok(trace)
}

/// Checkpoints `ceil(e^{k / per_unit})` for `k >= per_unit`, up to `horizon`.
pub fn log_checkpoints(horizon: u64, per_unit: u32) -> Vec<u64> {
    let mut out: Vec<u64> = Vec::new();
    let mut k = per_unit;
    loop {
        let c = (k as f64 / per_unit as f64).exp().ceil() as u64;
        if c > horizon {
            break;
        }
        if out.last() != Some(&c) {
            out.push(c);
        }
        k += 1;
    }
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrackingReport {
    pub no_valley_structure: bool,
    pub replicates: usize,
    pub discarded: usize,
    pub radius: f64,
    /// Fraction of (replicate, checkpoint) pairs with `|F(n) - b_{log n}| <= radius`.
    pub tracking_fraction: f64,
    /// Bottoms at the first and last checkpoint levels.
    pub first_bottom: Option<f64>,
    pub last_bottom: Option<f64>,
    /// `W^#` between them (log of the expected crossing time).
    pub barrier: Option<f64>,
    /// Median first checkpoint with the favorite near `last_bottom`.
    pub median_crossover: Option<f64>,
}

/// Runs `replicates` walks to `horizon` and compares the favorite site at each
/// checkpoint `n` with the bottom `b_{log n}` of the potential.
pub fn favorite_site_tracks_bottom(
    env: &IntEnvironment,
    horizon: u64,
    replicates: usize,
    radius: f64,
    rng: &RngStream,
) -> Result<TrackingReport> {
    let path = env.walled_path();
    let mut report = TrackingReport {
        no_valley_structure: false,
        replicates,
        discarded: 0,
        radius,
        tracking_fraction: f64::NAN,
        first_bottom: None,
        last_bottom: None,
        barrier: None,
        median_crossover: None,
    };
    if find_x_extrema(&path, 1.0).is_err() {
        report.no_valley_structure = true;
        return Ok(report);
    }
    let cps = log_checkpoints(horizon, 8);
    // bottoms are taken at levels >= 1, where the decomposition exists
    let bottoms: Vec<Option<f64>> = cps.iter().map(|&n| compute_b(&path, (n as f64).ln().max(1.0)).ok()).collect();
    report.first_bottom = bottoms.iter().flatten().next().copied();
    report.last_bottom = bottoms.iter().rev().flatten().next().copied();
    if let (Some(a), Some(b)) = (report.first_bottom, report.last_bottom) {
        report.barrier = Some(w_sharp(&path, a, b)?);
    }
    let runs: Vec<Result<WalkTrace>> =
        (0..replicates).into_par_iter().map(|i| sample_walk(env, &cps, &mut rng.fork(i as u64))).collect();
    let (mut hit, mut total) = (0usize, 0usize);
    let mut crossings = Vec::new();
    for run in runs {
        let tr = match run {
            Ok(t) => t,
            Err(e) if e.is_growth() => {
                report.discarded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        for (k, b) in bottoms.iter().enumerate() {
            if let Some(b) = b {
                total += 1;
                hit += ((tr.favorites[k] as f64 - b).abs() <= radius) as usize;
            }
        }
        if let (Some(a), Some(b)) = (report.first_bottom, report.last_bottom) {
            if a != b {
                if let Some(k) = tr.favorites.iter().position(|&f| (f as f64 - b).abs() <= radius) {
                    crossings.push(tr.checkpoints[k] as f64);
                }
            }
        }
    }
    report.tracking_fraction = hit as f64 / total.max(1) as f64;
    if !crossings.is_empty() {
        crossings.sort_by(f64::total_cmp);
        report.median_crossover = Some(median_sorted(&crossings));
    }
    Ok(report)
}

pub fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
