//! Distributional laws of the environment functionals.

use serde_json::json;

use super::config::ExperimentConfig;
use super::ladder::localization_draw;
use super::measure::{
    b1_draw, bottom_ratio_draw, exit_time_draw, extrema_gap_draw, one_sided_draw, record_ratio_draw, OneSidedDraw,
};
use super::report::{Check, StatReport, Table, Verdict};
use super::stats::{chi_square_gof, ks_statistic, ks_test, ks_two_sample};
use super::{keep_usable, median, replicate};
use crate::error::Result;
use crate::renewal::{analytic_bounds_suite, b1_density, integrate_b1_density, B1Density};
use crate::rng::RngStream;

/// Grid steps of the sampled paths, per law.
pub const ONE_SIDED_STEP: f64 = 1e-3;
pub const EXCURSION_STEP: f64 = 1e-4;
pub const BOTTOM_RATIO_STEP: f64 = 2e-3;
pub const RECORD_RATIO_STEP: f64 = 4e-3;
pub const B1_STEP: f64 = 4e-3;
pub const GAP_STEP: f64 = 1e-3;
pub const BOUNDS_STEP: f64 = 4e-3;

/// Censoring point of the record ratios.
pub const RATIO_CAP: f64 = 4.0;

/// Stream tags of the sub-experiments.
mod tag {
    pub const ONE_SIDED: u64 = 1;
    pub const BOTTOM_RATIO: u64 = 2;
    pub const RECORD_RATIO: u64 = 3;
    pub const RATIO_REFERENCE: u64 = 4;
    pub const B1: u64 = 5;
    pub const GAP: u64 = 6;
    pub const EXIT_TIME: u64 = 7;
    pub const BOUNDS: u64 = 8;
    pub const REMARK: u64 = 9;
    pub const EXCURSION: u64 = 10;
}

fn exp_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// `x - x log x` on `(0, 1]`.
pub fn excursion_height_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x - x * x.ln()
    }
}

/// `-W(beta_1^+)` against Exp(1) and the excursion height below it against
/// `x - x log x`.
pub fn one_sided_checks(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let draws = replicate(n, &base.fork(tag::ONE_SIDED), |_, rng| one_sided_draw(ONE_SIDED_STEP, rng));
    let mins: Vec<f64> = draws.iter().map(|d| d.neg_min).collect();
    let ks = ks_test(&mins, exp_cdf)?;
    rep.checks.push(Check::new(
        "one_sided_minimum_exponential",
        "-W(beta_1^+) ~ Exp(1)",
        json!({"step": ONE_SIDED_STEP, "ks_statistic": ks.statistic, "p_value": ks.p_value}),
        None,
        ks.p_value,
        n,
        ks.pass,
    ));
    Ok(())
}

/// The running maximum converges more slowly in the step than the minimum:
/// its own draws on a finer grid.
pub fn excursion_height_check(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<Vec<OneSidedDraw>> {
    let draws = replicate(n, &base.fork(tag::EXCURSION), |_, rng| one_sided_draw(EXCURSION_STEP, rng));
    let hs: Vec<f64> = draws.iter().map(|d| d.max_before).collect();
    let d = ks_statistic(&hs, excursion_height_cdf)?;
    rep.checks.push(Check::new(
        "excursion_height_law",
        "P(max before beta_1^+ <= x) = x - x log x",
        json!({"step": EXCURSION_STEP, "tolerance": 0.02}),
        Some(0.0),
        d,
        hs.len(),
        d <= 0.02,
    ));
    Ok(draws)
}

pub fn bottom_ratio_check(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<Vec<f64>> {
    let res = replicate(n, &base.fork(tag::BOTTOM_RATIO), |_, rng| bottom_ratio_draw(BOTTOM_RATIO_STEP, rng));
    let (vals, discarded) = keep_usable(res)?;
    let censored = vals.iter().filter(|v| v.is_none()).count();
    let xs: Vec<f64> = vals.into_iter().flatten().collect();
    rep.discarded += discarded + censored;
    let ks = ks_test(&xs, exp_cdf)?;
    rep.checks.push(Check::new(
        "bottom_ratio_exponential",
        "(W(b_1) - W(b_1^++)) / W#(b_1, b_1^++) ~ Exp(1)",
        json!({"step": BOTTOM_RATIO_STEP, "discarded": discarded, "censored": censored, "ks_statistic": ks.statistic}),
        None,
        ks.p_value,
        xs.len(),
        ks.pass,
    ));
    Ok(xs)
}

/// One uncensored-start record ratio per replicate, redrawing on the same
/// stream while the first record exceeds the cap.
pub fn record_ratio_check(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<(Vec<f64>, Vec<f64>)> {
    let scan = replicate(n, &base.fork(tag::RECORD_RATIO), |_, rng| loop {
        if let Some(r) = record_ratio_draw(RECORD_RATIO_STEP, RATIO_CAP, RATIO_CAP, rng) {
            break r;
        }
    });
    // h_{n+1} / h_n = 1 + r with density (1 + r)^{-2}: 1 / U
    let reference = replicate(n, &base.fork(tag::RATIO_REFERENCE), |_, rng| (1.0 / rng.open01()).min(RATIO_CAP));
    let ks = ks_two_sample(&scan, &reference)?;
    rep.checks.push(Check::new(
        "record_ratio_law",
        "record ratios 1 + r with r ~ (1 + x)^-2",
        json!({"step": RECORD_RATIO_STEP, "cap": RATIO_CAP, "ks_statistic": ks.statistic}),
        None,
        ks.p_value,
        n,
        ks.pass,
    ));
    Ok((scan, reference))
}

/// `int_a^b f` for the symmetric density of `b_1`, Simpson.
fn density_mass(a: f64, b: f64, variant: B1Density) -> f64 {
    let n = 2 * ((b - a) * 200.0).ceil().max(8.0) as usize;
    let h = (b - a) / n as f64;
    let mut s = b1_density(a, variant) + b1_density(b, variant);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * b1_density(a + i as f64 * h, variant);
    }
    s * h / 3.0
}

pub const B1_BIN: f64 = 0.1;
pub const B1_TOP: f64 = 6.0;

/// Histogram of `|b_1|` against both density variants. Exactly one variant
/// must integrate to 1 and fit.
pub fn b1_density_checks(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    // a grid location stands for its whole cell: spread it over the cell so
    // that bin edges falling on grid points do not bias the counts
    let res = replicate(n, &base.fork(tag::B1), |_, rng| {
        b1_draw(B1_STEP, rng).map(|x| x + B1_STEP * (rng.open01() - 0.5))
    });
    let (xs, discarded) = keep_usable(res)?;
    rep.discarded += discarded;
    let bins = (B1_TOP / B1_BIN).round() as usize;
    let mut observed = vec![0u64; bins + 1];
    for x in &xs {
        let k = ((x.abs() / B1_BIN).floor() as usize).min(bins);
        observed[k] += 1;
    }
    let m = xs.len() as f64;
    let mut table = Table::new("b1_histogram", &["lo", "hi", "observed", "expected_stated", "expected_rescaled"]);
    let mut good = Vec::new();
    let mut expected_all = Vec::new();
    for variant in [B1Density::Stated, B1Density::Rescaled] {
        let total = integrate_b1_density(variant);
        let mut expected: Vec<f64> =
            (0..bins).map(|k| 2.0 * m * density_mass(k as f64 * B1_BIN, (k + 1) as f64 * B1_BIN, variant)).collect();
        expected.push(m * total - expected.iter().sum::<f64>());
        let fit = chi_square_gof(&observed, &expected, 0)?;
        let normalized = (total - 1.0).abs() <= 1e-6;
        let name = match variant {
            B1Density::Stated => "stated",
            B1Density::Rescaled => "rescaled",
        };
        // informational: the verdict is the adjudication below
        let mut c = Check::new(
            &format!("b1_density_{name}"),
            "integral within 1e-6 of 1 and chi-square fit of |b_1|",
            json!({"integral": total, "normalized": normalized, "chi_square": fit.statistic, "dof": fit.dof,
                   "p_value": fit.p_value, "fits": fit.pass}),
            Some(1.0),
            total,
            xs.len(),
            true,
        );
        c.verdict = Verdict::NotApplicable;
        rep.checks.push(c);
        if normalized && fit.pass {
            good.push(name);
        }
        expected_all.push(expected);
    }
    for k in 0..=bins {
        let hi = if k == bins { f64::INFINITY } else { (k + 1) as f64 * B1_BIN };
        table.push(vec![k as f64 * B1_BIN, hi, observed[k] as f64, expected_all[0][k], expected_all[1][k]]);
    }
    rep.tables.push(table);
    rep.checks.push(Check::new(
        "b1_density_adjudication",
        "exactly one density variant is a probability density fitting |b_1|",
        json!({"step": B1_STEP, "accepted": good}),
        None,
        good.len() as f64,
        xs.len(),
        good.len() == 1,
    ));
    Ok(())
}

/// `x_2 - x_1` against the exit time of `(-1, 1)`, and the density of `x_1`
/// bounded by 1.
pub fn gap_checks(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let res = replicate(n, &base.fork(tag::GAP), |_, rng| extrema_gap_draw(GAP_STEP, rng));
    let (draws, discarded) = keep_usable(res)?;
    rep.discarded += discarded;
    let gaps: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let exits = replicate(n, &base.fork(tag::EXIT_TIME), |_, rng| exit_time_draw(rng));
    let ks = ks_two_sample(&gaps, &exits)?;
    rep.checks.push(Check::new(
        "extrema_gap_law",
        "x_2 - x_1 has the law of the exit time of (-1, 1)",
        json!({"step": GAP_STEP, "ks_statistic": ks.statistic}),
        None,
        ks.p_value,
        gaps.len(),
        ks.pass,
    ));
    let w = 0.25;
    let m = draws.len() as f64;
    let top = draws.iter().map(|d| d.0).fold(0.0, f64::max);
    let bins = (top / w).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for d in &draws {
        counts[((d.0 / w).floor() as usize).min(bins - 1)] += 1;
    }
    // largest bin density net of 3 standard errors
    let (worst, raw) = counts
        .iter()
        .map(|&c| {
            let dens = c as f64 / (m * w);
            (dens - 3.0 * (c as f64).sqrt() / (m * w), dens)
        })
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    rep.checks.push(Check::new(
        "x1_density_bounded",
        "x_1(W, 1) has density at most 1",
        json!({"bin_width": w, "max_bin_density": raw}),
        Some(1.0),
        worst,
        draws.len(),
        worst <= 1.0,
    ));
    Ok(())
}

pub fn bounds_checks(n: usize, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let mut table = Table::new("bounds", &["argument", "analytic", "empirical", "std_err"]);
    for b in analytic_bounds_suite(n, BOUNDS_STEP, &base.fork(tag::BOUNDS))? {
        table.push(vec![b.argument, b.analytic, b.empirical, b.std_err]);
        rep.checks.push(Check::new(
            &format!("{}@{}", b.check, b.argument),
            if b.exact { "equality within 3 standard errors" } else { "upper bound with 3 standard errors of slack" },
            json!({"std_err": b.std_err, "step": BOUNDS_STEP}),
            Some(b.analytic),
            b.empirical,
            b.n,
            b.pass,
        ));
    }
    rep.tables.push(table);
    Ok(())
}

/// `|F - b_s|` at the ladder record nearest `log t = s`, for each level `s`
/// of the config: the medians must not increase with `s`.
pub fn remark_probe(n: usize, cfg: &ExperimentConfig, base: &RngStream, rep: &mut StatReport) -> Result<()> {
    let k = cfg.constants();
    let mut medians = Vec::new();
    let mut table = Table::new("favorite_bottom_gap", &["s", "gap"]);
    for (j, &s) in cfg.levels.iter().enumerate() {
        let b = base.fork(tag::REMARK).fork(j as u64);
        let res = replicate(n, &b, |_, rng| localization_draw(cfg.step, s, k, cfg.window_c, cfg.refine, rng));
        let (draws, discarded) = keep_usable(res)?;
        rep.discarded += discarded;
        let gaps: Vec<f64> = draws.iter().map(|d| d.gap_at_level).collect();
        for &g in &gaps {
            table.push(vec![s, g]);
        }
        medians.push(if gaps.is_empty() { f64::NAN } else { median(&gaps) });
    }
    rep.tables.push(table);
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    // diagnostic only: the ladder times depend on the landmark constants
    let mut c = Check::new(
        "favorite_bottom_gap_shrinks",
        "median |F_X - b_s| near log t = s is non-increasing in s",
        json!({"levels": cfg.levels, "medians": medians, "non_increasing": monotone}),
        None,
        *medians.last().unwrap_or(&f64::NAN),
        n,
        true,
    );
    c.verdict = Verdict::NotApplicable;
    rep.checks.push(c);
    Ok(())
}

/// Sample sizes: `10 replicates` for the one-sided and `b_1` laws,
/// `replicates` for the ratio and gap laws, `replicates / 5` for the bound
/// checks and `replicates / 100` (at least 8) per level for the favorite probe.
pub fn run_distribution_suite(cfg: &ExperimentConfig) -> Result<StatReport> {
    let mut rep = StatReport::new("dist", cfg);
    let base = RngStream::new(cfg.seed, 0);
    let n = cfg.replicates.max(8);
    one_sided_checks(10 * n, &base, &mut rep)?;
    let draws = excursion_height_check(n, &base, &mut rep)?;
    let mut t = Table::new("one_sided", &["neg_min", "max_before"]);
    for d in &draws {
        t.push(vec![d.neg_min, d.max_before]);
    }
    rep.tables.push(t);
    let ratios = bottom_ratio_check(n, &base, &mut rep)?;
    let (scan, reference) = record_ratio_check(n, &base, &mut rep)?;
    let mut t = Table::new("ratios", &["bottom_ratio", "record_ratio", "reference_ratio"]);
    for i in 0..n {
        t.push(vec![ratios.get(i).copied().unwrap_or(f64::NAN), scan[i], reference[i]]);
    }
    rep.tables.push(t);
    b1_density_checks(10 * n, &base, &mut rep)?;
    gap_checks(n, &base, &mut rep)?;
    bounds_checks((n / 5).max(8), &base, &mut rep)?;
    remark_probe((n / 100).max(8), cfg, &base, &mut rep)?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excursion_cdf_shape() {
        assert_eq!(excursion_height_cdf(0.0), 0.0);
        assert_eq!(excursion_height_cdf(1.0), 1.0);
        let e = std::f64::consts::E;
        assert!((excursion_height_cdf(1.0 / e) - 2.0 / e).abs() < 1e-12);
    }

    #[test]
    fn density_mass_sums_to_half() {
        let m: f64 = (0..600).map(|k| density_mass(k as f64 * 0.1, (k + 1) as f64 * 0.1, B1Density::Rescaled)).sum();
        assert!((m - 0.5).abs() < 1e-9, "{m}");
    }
}

