//! Discretized two-sided Brownian paths.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A path sampled on the grid `{k * step : -n_left <= k <= n_right}`.
///
/// Values are stored contiguously from the leftmost knot to the rightmost;
/// `origin` is the index of location 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPath {
    step: f64,
    values: Vec<f64>,
    origin: usize,
}

impl GridPath {
    /// Builds a path from its left wing (values at -step, -2 step, ...), the
    /// origin value and its right wing (values at step, 2 step, ...).
    pub fn new(step: f64, left_values: &[f64], origin_value: f64, right_values: &[f64]) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Param(format!("step must be positive, got {step}")));
        }
        let mut values = Vec::with_capacity(left_values.len() + 1 + right_values.len());
        values.extend(left_values.iter().rev());
        values.push(origin_value);
        values.extend_from_slice(right_values);
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("path values must be finite".into()));
        }
        Ok(GridPath { step, values, origin: left_values.len() })
    }

    /// Builds a path from contiguous values, `origin` being the index of location 0.
    pub fn from_values(step: f64, values: Vec<f64>, origin: usize) -> Result<Self> {
        if origin >= values.len() {
            return Err(Error::Param("origin index outside values".into()));
        }
        let left: Vec<f64> = values[..origin].iter().rev().copied().collect();
        GridPath::new(step, &left, values[origin], &values[origin + 1..])
    }

    /// Samples `f` at every knot of `[-n_left*step, n_right*step]`.
    pub fn from_fn(step: f64, n_left: usize, n_right: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..n_left + n_right + 1)
            .map(|i| f((i as f64 - n_left as f64) * step))
            .collect();
        GridPath::from_values(step, values, n_left)
    }

    /// Piecewise-linear interpolant of `knots` (sorted by location), sampled on
    /// the grid covering the knots' span. The span must contain 0.
    pub fn piecewise_linear(step: f64, knots: &[(f64, f64)]) -> Result<Self> {
        if knots.len() < 2 || knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Param("need at least two knots with increasing locations".into()));
        }
        let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::Param("knot span must contain 0".into()));
        }
        let n_left = (-lo / step + 1e-9).floor() as usize;
        let n_right = (hi / step + 1e-9).floor() as usize;
        GridPath::from_fn(step, n_left, n_right, |x| {
            let j = knots.partition_point(|k| k.0 <= x).clamp(1, knots.len() - 1);
            let (x0, y0) = knots[j - 1];
            let (x1, y1) = knots[j];
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin_index(&self) -> usize {
        self.origin
    }

    pub fn origin_value(&self) -> f64 {
        self.values[self.origin]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_left(&self) -> usize {
        self.origin
    }

    pub fn n_right(&self) -> usize {
        self.values.len() - 1 - self.origin
    }

    pub fn left_values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.values[..self.origin].iter().rev()
    }

    pub fn right_values(&self) -> &[f64] {
        &self.values[self.origin + 1..]
    }

    pub fn lo(&self) -> f64 {
        -(self.n_left() as f64) * self.step
    }

    pub fn hi(&self) -> f64 {
        self.n_right() as f64 * self.step
    }

    pub fn width(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.n_left() as f64 * self.step,
            Side::Right => self.n_right() as f64 * self.step,
        }
    }

    /// Location of knot `i` (contiguous index).
    pub fn loc(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) * self.step
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Contiguous index of the knot at or left of `x`.
    pub fn floor_index(&self, x: f64) -> Result<usize> {
        self.check(x)?;
        let k = (x / self.step + self.origin as f64 + 1e-9).floor();
        Ok((k.max(0.0) as usize).min(self.len() - 1))
    }

    /// Contiguous index of the knot nearest to `x`.
    pub fn nearest_index(&self, x: f64) -> Result<usize> {
        self.check(x)?;
        let k = (x / self.step + self.origin as f64).round();
        Ok((k.max(0.0) as usize).min(self.len() - 1))
    }

    fn check(&self, x: f64) -> Result<()> {
        let tol = 1e-9 * self.step;
        if !(x >= self.lo() - tol && x <= self.hi() + tol) {
            return Err(Error::Domain { x, lo: self.lo(), hi: self.hi() });
        }
        Ok(())
    }

    /// Linear interpolation; outside the sampled range is an error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        let u = x / self.step + self.origin as f64;
        let i = (u.floor().max(0.0) as usize).min(self.len() - 1);
        if i + 1 >= self.len() {
            return Ok(self.values[i]);
        }
        let f = u - i as f64;
        Ok(self.values[i] + f * (self.values[i + 1] - self.values[i]))
    }

    /// The path `s -> W(-s)`.
    pub fn reflect(&self) -> GridPath {
        let mut values = self.values.clone();
        values.reverse();
        GridPath { step: self.step, origin: self.n_right(), values }
    }

    /// The path `s -> W(s) + c`.
    pub fn shifted(&self, c: f64) -> GridPath {
        GridPath { step: self.step, origin: self.origin, values: self.values.iter().map(|v| v + c).collect() }
    }

    /// Restriction to the knots in `[lo, hi]` (which must contain 0).
    pub fn window(&self, lo: f64, hi: f64) -> Result<GridPath> {
        if lo > 0.0 || hi < 0.0 {
            return Err(Error::Param("window must contain 0".into()));
        }
        let a = self.nearest_index(lo.max(self.lo()))?;
        let b = self.nearest_index(hi.min(self.hi()))?;
        Ok(GridPath { step: self.step, origin: self.origin - a, values: self.values[a..=b].to_vec() })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            out.serialize((self.loc(i), v))?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a path written by [`GridPath::write_csv`]. Positions must lie on a
    /// uniform grid through 0.
    pub fn read_csv<R: Read>(r: R) -> Result<GridPath> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let (x, v): (f64, f64) = rec?;
            rows.push((x, v));
        }
        if rows.len() < 2 {
            return Err(Error::Data("path CSV needs at least two rows".into()));
        }
        let step = rows[1].0 - rows[0].0;
        if !(step > 0.0) {
            return Err(Error::Data("positions must increase".into()));
        }
        let origin = rows
            .iter()
            .position(|(x, _)| x.abs() < 1e-6 * step)
            .ok_or_else(|| Error::Data("no knot at position 0".into()))?;
        for (i, (x, _)) in rows.iter().enumerate() {
            let want = (i as f64 - origin as f64) * step;
            if (x - want).abs() > 1e-6 * step.max(want.abs() * 1e-9) + 1e-9 {
                return Err(Error::Data(format!("row {i}: position {x} off the uniform grid")));
            }
        }
        GridPath::from_values(step, rows.into_iter().map(|r| r.1).collect(), origin)
    }
}

fn brownian_wing(rng: &mut RngStream, n: usize, sd: f64, start: f64) -> Vec<f64> {
    let mut w = start;
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            w += sd * z;
            w
        })
        .collect()
}

/// Two-sided Brownian motion on `[-half_width, half_width]`, `W(0) = 0`.
/// The right wing is drawn first, then the left wing, from the same stream.
pub fn sample_environment(rng: &mut RngStream, step: f64, half_width: f64) -> Result<GridPath> {
    if !(step > 0.0) || !(half_width > 0.0) || half_width < step * (1.0 - 1e-9) {
        return Err(Error::Param(format!("need 0 < step <= half_width, got step={step}, half_width={half_width}")));
    }
    let n = ((half_width / step) * (1.0 + 1e-12)).floor() as usize;
    let sd = step.sqrt();
    let right = brownian_wing(rng, n, sd, 0.0);
    let left = brownian_wing(rng, n, sd, 0.0);
    GridPath::new(step, &left, 0.0, &right)
}

/// One-sided Brownian path on `[0, length]` (empty left wing).
pub fn sample_one_sided(rng: &mut RngStream, step: f64, length: f64) -> Result<GridPath> {
    if !(step > 0.0) || !(length >= step) {
        return Err(Error::Param("need 0 < step <= length".into()));
    }
    let n = ((length / step) * (1.0 + 1e-12)).floor() as usize;
    let right = brownian_wing(rng, n, step.sqrt(), 0.0);
    GridPath::new(step, &[], 0.0, &right)
}

/// Appends fresh Brownian increments to `side` in chunks of `chunk` until
/// `pred` holds. Fails once the wing would have to exceed `max_width`.
pub fn extend_until(
    mut path: GridPath,
    side: Side,
    mut pred: impl FnMut(&GridPath) -> bool,
    rng: &mut RngStream,
    chunk: f64,
    max_width: f64,
) -> Result<GridPath> {
    if !(chunk > 0.0) {
        return Err(Error::Param("chunk must be positive".into()));
    }
    let per_chunk = ((chunk / path.step).round() as usize).max(1);
    let sd = path.step.sqrt();
    while !pred(&path) {
        let width = path.width(side);
        if width >= max_width - 1e-9 * path.step {
            return Err(Error::GrowthLimit { side, width });
        }
        let room = ((max_width - width) / path.step + 1e-9).floor() as usize;
        let n = per_chunk.min(room.max(1));
        match side {
            Side::Right => {
                let last = *path.values.last().unwrap();
                let fresh = brownian_wing(rng, n, sd, last);
                path.values.extend(fresh);
            }
            Side::Left => {
                let first = path.values[0];
                let mut fresh = brownian_wing(rng, n, sd, first);
                fresh.reverse();
                fresh.extend_from_slice(&path.values);
                path.values = fresh;
                path.origin += n;
            }
        }
    }
    Ok(path)
}

/// Extends both wings alternately until `pred` holds.
pub fn extend_both_until(
    mut path: GridPath,
    mut pred: impl FnMut(&GridPath) -> bool,
    rng: &mut RngStream,
    chunk: f64,
    max_width: f64,
) -> Result<GridPath> {
    while !pred(&path) {
        let mut grown = false;
        for side in [Side::Right, Side::Left] {
            if path.width(side) < max_width - 1e-9 * path.step {
                let target = (path.width(side) + chunk).min(max_width);
                path = extend_until(path, side, |p| p.width(side) >= target - 1e-9 * p.step, rng, chunk, max_width)?;
                grown = true;
            }
        }
        if !grown {
            return Err(Error::GrowthLimit { side: Side::Right, width: path.width(Side::Right) });
        }
    }
    Ok(path)
}

/// Brownian scaling `s -> lambda * W(s / lambda^2)`; knots keep their values
/// (times lambda) and the step becomes `lambda^2 * step`.
pub fn scale_path(path: &GridPath, lambda: f64) -> Result<GridPath> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Param(format!("lambda must be positive, got {lambda}")));
    }
    Ok(GridPath {
        step: lambda * lambda * path.step,
        origin: path.origin,
        values: path.values.iter().map(|v| lambda * v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn single_knot_wings() {
        let mut rng = RngStream::new(3, 0);
        let p = sample_environment(&mut rng, 0.01, 0.01).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.eval(0.0).unwrap(), 0.0);
        assert!(p.eval(0.02).is_err());
    }

    #[test]
    fn deterministic() {
        let a = sample_environment(&mut RngStream::new(11, 5), 0.01, 10.0).unwrap();
        let b = sample_environment(&mut RngStream::new(11, 5), 0.01, 10.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_at_one() {
        let n = 10_000;
        let s: f64 = (0..n)
            .map(|i| {
                let p = sample_environment(&mut RngStream::new(2, i), 0.05, 1.0).unwrap();
                p.eval(1.0).unwrap().powi(2)
            })
            .sum();
        assert!((s / n as f64 - 1.0).abs() < 0.05);
    }

    #[test]
    fn interpolation_and_domain() {
        let p = GridPath::new(0.5, &[1.0], 0.0, &[2.0, -1.0]).unwrap();
        assert_relative_eq!(p.eval(0.25).unwrap(), 1.0);
        assert_relative_eq!(p.eval(-0.25).unwrap(), 0.5);
        assert_relative_eq!(p.eval(1.0).unwrap(), -1.0);
        assert!(matches!(p.eval(1.01), Err(Error::Domain { .. })));
        assert_eq!(p.lo(), -0.5);
        assert_eq!(p.reflect().eval(0.5).unwrap(), 1.0);
    }

    #[test]
    fn extend_width_rule() {
        let mut rng = RngStream::new(1, 1);
        let p = sample_environment(&mut rng, 0.01, 0.5).unwrap();
        let q = extend_until(p.clone(), Side::Right, |p| p.hi() >= 5.0 - 1e-9, &mut rng, 1.0, 100.0).unwrap();
        assert!(q.hi() >= 5.0 - 1e-9 && q.hi() < 6.0);
        // the old knots are untouched
        assert_eq!(&q.values()[..p.len()], p.values());
        let r = extend_until(q.clone(), Side::Right, |_| true, &mut rng, 1.0, 100.0).unwrap();
        assert_eq!(r, q);
        let l = extend_until(p.clone(), Side::Left, |p| p.lo() <= -3.0 + 1e-9, &mut rng, 1.0, 100.0).unwrap();
        assert_eq!(l.eval(0.3).unwrap(), p.eval(0.3).unwrap());
        assert_eq!(l.eval(-0.5).unwrap(), p.eval(-0.5).unwrap());
        let err = extend_until(p, Side::Left, |_| false, &mut rng, 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::GrowthLimit { side: Side::Left, .. }));
    }

    #[test]
    fn scale_knot_arithmetic() {
        let p = GridPath::new(1.0, &[], 0.0, &[0.5]).unwrap();
        let q = scale_path(&p, 2.0).unwrap();
        assert_eq!(q.step(), 4.0);
        assert_eq!(q.eval(4.0).unwrap(), 1.0);
        assert_eq!(scale_path(&p, 1.0).unwrap(), p);
    }

    #[test]
    fn csv_round_trip() {
        let p = sample_environment(&mut RngStream::new(9, 0), 0.125, 2.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = GridPath::read_csv(&buf[..]).unwrap();
        assert_eq!(q.len(), p.len());
        assert_eq!(q.values(), p.values());
    }

    #[test]
    fn piecewise_linear_knots() {
        let p = GridPath::piecewise_linear(0.5, &[(-2.0, 1.0), (0.0, 0.0), (3.0, 6.0)]).unwrap();
        assert_eq!(p.lo(), -2.0);
        assert_eq!(p.hi(), 3.0);
        assert_relative_eq!(p.eval(1.5).unwrap(), 3.0);
        assert_relative_eq!(p.eval(-1.0).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn scale_composes(seed in 0u64..1000, l1 in 0.1f64..4.0, l2 in 0.1f64..4.0) {
            let p = sample_environment(&mut RngStream::new(seed, 0), 0.25, 3.0).unwrap();
            let a = scale_path(&scale_path(&p, l1).unwrap(), l2).unwrap();
            let b = scale_path(&p, l1 * l2).unwrap();
            for i in 0..p.len() {
                prop_assert!((a.loc(i) - b.loc(i)).abs() <= 1e-12 * b.loc(i).abs().max(1.0));
                prop_assert!((a.value(i) - b.value(i)).abs() <= 1e-12 * b.value(i).abs().max(1.0));
            }
        }

        #[test]
        fn reflect_twice_is_identity(seed in 0u64..1000) {
            let p = sample_environment(&mut RngStream::new(seed, 1), 0.1, 2.0).unwrap();
            prop_assert_eq!(p.reflect().reflect(), p);
        }
    }
}
