use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrema::LandmarkConstants;

/// Environment variable that overrides the seed of every experiment.
pub const SEED_VAR: &str = "BROX_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Sim,
    Dist,
    Bjumps,
    Localize,
    Transition,
    Timing,
    OracleXcheck,
    Walk,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Sim => "sim",
            ExperimentKind::Dist => "dist",
            ExperimentKind::Bjumps => "bjumps",
            ExperimentKind::Localize => "localize",
            ExperimentKind::Transition => "transition",
            ExperimentKind::Timing => "timing",
            ExperimentKind::OracleXcheck => "xcheck",
            ExperimentKind::Walk => "walk",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub seed: u64,
    /// Replicates per level or per check; experiments scale their own
    /// sample sizes from this.
    pub replicates: usize,
    /// Grid step of sampled environments.
    pub step: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Levels at which landmark-based experiments run.
    pub levels: Vec<f64>,
    pub k: [f64; 3],
    /// Allows landmark constants outside the admissible set, for runs at
    /// levels where the admissible ones leave no room.
    pub allow_small_constants: bool,
    /// Exponent `c` of the windows `I(x)`.
    pub window_c: f64,
    /// Rungs per doubling on hitting ladders.
    pub refine: u32,
    /// Execution settings below stay out of reports, which must not depend
    /// on where they are written or on the pool size.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses all cores.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let k = LandmarkConstants::default();
        ExperimentConfig {
            kind: None,
            seed: 1,
            replicates: 200,
            step: 1e-2,
            r_min: 1.0,
            r_max: 8.0,
            levels: vec![3.0, 5.0, 8.0],
            k: [k.k1, k.k2, k.k3],
            allow_small_constants: false,
            window_c: 7.0,
            refine: 1,
            out: None,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    pub fn constants(&self) -> LandmarkConstants {
        LandmarkConstants { k1: self.k[0], k2: self.k[1], k3: self.k[2] }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_c > 6.0) {
            return Err(Error::Param(format!("window exponent must exceed 6, got {}", self.window_c)));
        }
        if self.replicates < 1 {
            return Err(Error::Param("replicates must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Param(format!("step must be positive, got {}", self.step)));
        }
        if !(self.r_min > 0.0 && self.r_max >= self.r_min) {
            return Err(Error::Param(format!("bad level range ({}, {})", self.r_min, self.r_max)));
        }
        if self.k.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::Param("landmark constants must be positive".into()));
        }
        if !self.allow_small_constants && !self.constants().admissible() {
            return Err(Error::Param(format!(
                "landmark constants {:?} are not admissible; set allow_small_constants to use them",
                self.k
            )));
        }
        if self.refine < 1 {
            return Err(Error::Param("refine must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Param("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.window_c = 6.0));
        assert!(bad(|c| c.replicates = 0));
        assert!(bad(|c| c.k = [1.0, 1.0, 1.0]));
        assert!(!bad(|c| {
            c.k = [1.0, 1.0, 1.0];
            c.allow_small_constants = true;
        }));
    }

    #[test]
    fn json_round_trip() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"kind": "localize", "seed": 5, "levels": [3.0]}"#).unwrap();
        assert_eq!(c.kind, Some(ExperimentKind::Localize));
        assert_eq!(c.seed, 5);
        assert_eq!(c.replicates, 200);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 5}"#).is_err());
    }
}
