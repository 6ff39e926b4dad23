use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// One verdict line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check: String,
    /// The law, bound or invariant being checked.
    pub basis: String,
    pub params: serde_json::Value,
    pub analytic: Option<f64>,
    pub empirical: f64,
    pub n: usize,
    pub verdict: Verdict,
}

impl Check {
    pub fn new(check: &str, basis: &str, params: serde_json::Value, analytic: Option<f64>, empirical: f64, n: usize, pass: bool) -> Self {
        Check {
            check: check.into(),
            basis: basis.into(),
            params,
            analytic,
            empirical,
            n,
            verdict: Verdict::from_bool(pass),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// A CSV table attached to a report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub generator: &'static str,
    pub seed: u64,
    /// Replicate `i` draws from stream `i` (or a fork of it) under `seed`.
    pub streams: &'static str,
    pub version: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub significance: f64,
    /// Slack of one-sided bound checks, in standard errors.
    pub bound_slack_se: f64,
    pub checks: Vec<Check>,
    pub discarded: usize,
    pub provenance: Provenance,
    #[serde(skip)]
    pub tables: Vec<Table>,
    /// Wall-clock fields; the only ones that vary between identical runs.
    pub started_unix: u64,
    pub runtime_seconds: f64,
}

impl StatReport {
    pub fn new(experiment: &str, config: &ExperimentConfig) -> Self {
        StatReport {
            experiment: experiment.into(),
            config: config.clone(),
            significance: super::stats::SIGNIFICANCE,
            bound_slack_se: 3.0,
            checks: Vec::new(),
            discarded: 0,
            provenance: Provenance {
                generator: "chacha8",
                seed: config.seed,
                streams: "replicate index",
                version: env!("CARGO_PKG_VERSION"),
            },
            tables: Vec::new(),
            started_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            runtime_seconds: 0.0,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with the wall-clock fields zeroed.
    pub fn to_json_stable(&self) -> Result<String> {
        let mut r = self.clone();
        r.started_unix = 0;
        r.runtime_seconds = 0.0;
        r.to_json()
    }

    /// Writes `report.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("report.json");
        std::fs::write(&p, self.to_json()? + "\n").map_err(|e| Error::io(&p, e))?;
        for t in &self.tables {
            let p = dir.join(format!("{}.csv", t.name));
            let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
            t.write_csv(f)?;
        }
        Ok(())
    }
}
