//! Goodness-of-fit tests.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const SIGNIFICANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Sample size; for two samples the effective size `n m / (n + m)`.
    pub n: f64,
    pub p_value: f64,
    pub pass: bool,
}

impl KsResult {
    fn new(d: f64, n: f64) -> Self {
        let p = kolmogorov_p(d, n);
        KsResult { statistic: d, n, p_value: p, pass: p > SIGNIFICANCE }
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution, with Stephens' small-sample
/// adjustment `lambda = (sqrt n + 0.12 + 0.11 / sqrt n) D`.
pub fn kolmogorov_p(d: f64, n: f64) -> f64 {
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let t = (-2.0 * k * k * lambda * lambda).exp();
        s += if k as u64 % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::Data("NaN in samples".into()));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup |F_n - F|` with no minimum sample size.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < 8 {
        return Err(Error::Data(format!("need at least 8 samples, got {}", samples.len())));
    }
    Ok(KsResult::new(ks_statistic(samples, cdf)?, samples.len() as f64))
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 8 || b.len() < 8 {
        return Err(Error::Data("need at least 8 samples in each group".into()));
    }
    let (a, b) = (sorted(a)?, sorted(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(KsResult::new(d, n * m / (n + m)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
    pub pass: bool,
}

/// Pearson's test of `observed` against `expected` counts. Adjacent bins are
/// pooled until each expected count is at least 5; `fitted` parameters are
/// removed from the degrees of freedom.
pub fn chi_square_gof(observed: &[u64], expected: &[f64], fitted: usize) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.is_empty() {
        return Err(Error::Data("observed and expected must have equal nonzero length".into()));
    }
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob as f64;
        e += ex;
        if e >= 5.0 {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    if pooled.len() < fitted + 2 {
        return Err(Error::Data("too few bins after pooling".into()));
    }
    let stat: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = pooled.len() - 1 - fitted;
    let p = 1.0 - ChiSquared::new(dof as f64).expect("dof > 0").cdf(stat);
    Ok(ChiSquareResult { statistic: stat, dof, p_value: p, bins: pooled.len(), pass: p > SIGNIFICANCE })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exact_quantiles() {
        let n = 200;
        let q: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let exp: Vec<f64> = q.iter().map(|u| -(1.0 - u).ln()).collect();
        let r = ks_test(&exp, |x| 1.0 - (-x).exp()).unwrap();
        assert_relative_eq!(r.statistic, 0.5 / n as f64, epsilon = 1e-12);
        assert!(r.pass);
    }

    #[test]
    fn two_points() {
        assert_relative_eq!(ks_statistic(&[0.75, 0.25], |x| x).unwrap(), 0.25);
        assert!(ks_test(&[0.25, 0.75], |x| x).is_err());
        assert!(ks_test(&[0.1, f64::NAN, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], |x| x).is_err());
    }

    #[test]
    fn kolmogorov_tail_values() {
        // P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01 (asymptotic)
        assert_relative_eq!(kolmogorov_p(1.3581 / 1e4, 1e8), 0.05, epsilon = 2e-4);
        assert_relative_eq!(kolmogorov_p(1.6276 / 1e4, 1e8), 0.01, epsilon = 1e-4);
    }

    #[test]
    fn two_sample_identical_and_shifted() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 50.0).collect();
        let r = ks_two_sample(&a, &b).unwrap();
        assert_relative_eq!(r.statistic, 0.5);
        assert!(!r.pass);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let r = chi_square_gof(&[10, 20, 30], &[10.0, 20.0, 30.0], 0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.dof, 2);
        assert_relative_eq!(r.p_value, 1.0);
        // pooled: [1+2+3] and [10] against [2+2+2] and [10]
        let r = chi_square_gof(&[1, 2, 3, 10], &[2.0, 2.0, 2.0, 10.0], 0).unwrap();
        assert_eq!(r.bins, 2);
    }

    proptest! {
        #[test]
        fn statistic_in_unit_interval(xs in proptest::collection::vec(-5.0f64..5.0, 8..200)) {
            let r = ks_test(&xs, |x| 1.0 / (1.0 + (-x).exp())).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.statistic));
            prop_assert_eq!(r.pass, r.p_value > SIGNIFICANCE);
            let mut rev = xs.clone();
            rev.reverse();
            prop_assert_eq!(ks_test(&rev, |x| 1.0 / (1.0 + (-x).exp())).unwrap(), r);
        }
    }
}
