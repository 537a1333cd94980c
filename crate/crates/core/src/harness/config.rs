//! Experiment description loaded from JSON. See `docs/config_schema.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ident_bic::BicParams;
use crate::model::{ActivityModel, SystemConfig};
use crate::{Error, Result};

/// How the ridge tuning parameter is chosen at each grid point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// Closed-form value when `X^T X` is invertible, pooled GCV otherwise.
    #[default]
    Opt,
    /// Pooled GCV over pilot frames.
    Gcv,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeParams {
    /// One CSV row per target false-alarm probability.
    pub target_pf: Vec<f64>,
    /// Columns that must exceed the threshold; defaults to `ceil(l / 5)`.
    pub n_fuse: Option<usize>,
    pub lambda: LambdaRule,
    pub pilot_frames: usize,
    pub gcv_points: usize,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams {
            target_pf: vec![0.05],
            n_fuse: None,
            lambda: LambdaRule::Opt,
            pilot_frames: 16,
            gcv_points: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    Ridge(RidgeParams),
    Bic(BicParams),
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Ridge(_) => "ridge",
            AlgorithmConfig::Bic(_) => "bic",
        }
    }

    /// Default parameters for an algorithm selected by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ridge" => Ok(AlgorithmConfig::Ridge(RidgeParams::default())),
            "bic" => Ok(AlgorithmConfig::Bic(BicParams::default())),
            other => Err(Error::config(format!("unknown algorithm {other:?}"))),
        }
    }

    /// Labels of the CSV rows this algorithm produces, in order.
    pub fn labels(&self) -> Vec<String> {
        match self {
            AlgorithmConfig::Ridge(p) => p.target_pf.iter().map(|t| format!("ridge_pf{t}")).collect(),
            AlgorithmConfig::Bic(_) => vec!["bic".into()],
        }
    }
}

/// What each trial simulates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialMode {
    /// Identification on the chip-level linear model only.
    #[default]
    Identification,
    /// Oversampled waveform, identification from its chip matched filter,
    /// then multiuser detection and decoding of the identified devices.
    Full,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    /// SNR grid in dB. Empty means `system.snr_db` only.
    pub snr_db: Vec<f64>,
    /// Overloading factors; `k_u = round(of * n_c)`. Empty means `system.k_u`.
    pub overloading_factors: Vec<f64>,
    /// Activity settings; empty means `system.activity`.
    pub activity: Vec<ActivityModel>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Fill the `wall_time_s` column. Off by default so reruns are byte-identical.
    pub record_wall_time: bool,
    /// Directory for first-trial diagnostic dumps (clustering, BIC trace).
    pub dump_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub sweep: Sweep,
    pub trials: usize,
    #[serde(default)]
    pub mode: TrialMode,
    #[serde(default)]
    pub output: OutputConfig,
}

/// One `(activity, overloading factor, SNR)` combination.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub activity_index: usize,
    pub of_index: usize,
    pub system: SystemConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr grid must be finite"));
        }
        if self.sweep.overloading_factors.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::config("overloading factors must be positive"));
        }
        match &self.algorithm {
            AlgorithmConfig::Ridge(p) => {
                if p.target_pf.is_empty() || p.target_pf.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
                    return Err(Error::config("target_pf must be a nonempty list in (0, 1)"));
                }
                if p.pilot_frames == 0 || p.gcv_points == 0 {
                    return Err(Error::config("pilot_frames and gcv_points must be positive"));
                }
                if let Some(n) = p.n_fuse {
                    if n == 0 || n > self.system.l {
                        return Err(Error::config(format!("n_fuse = {n} outside [1, l]")));
                    }
                }
                if let LambdaRule::Fixed(l) = p.lambda {
                    if !(l >= 0.0) {
                        return Err(Error::config("fixed ridge lambda must be non-negative"));
                    }
                }
            }
            AlgorithmConfig::Bic(p) => p.validate()?,
        }
        for point in self.grid() {
            point.system.validate()?;
        }
        Ok(())
    }

    /// Grid in output order: activity, then overloading factor, then SNR.
    pub fn grid(&self) -> Vec<GridPoint> {
        let activities = if self.sweep.activity.is_empty() {
            vec![self.system.activity]
        } else {
            self.sweep.activity.clone()
        };
        let k_us: Vec<usize> = if self.sweep.overloading_factors.is_empty() {
            vec![self.system.k_u]
        } else {
            self.sweep
                .overloading_factors
                .iter()
                .map(|of| (of * self.system.n_c as f64).round() as usize)
                .collect()
        };
        let snrs = if self.sweep.snr_db.is_empty() {
            vec![self.system.snr_db]
        } else {
            self.sweep.snr_db.clone()
        };
        let mut out = Vec::new();
        for (ai, &activity) in activities.iter().enumerate() {
            for (oi, &k_u) in k_us.iter().enumerate() {
                for &snr_db in &snrs {
                    out.push(GridPoint {
                        activity_index: ai,
                        of_index: oi,
                        system: SystemConfig {
                            k_u,
                            snr_db,
                            activity,
                            ..self.system.clone()
                        },
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {"k_u": 64, "n_c": 32, "n_s": 16, "l": 2, "alpha_bar": 6,
                   "activity": {"fixed": 0.05}},
        "algorithm": {"kind": "ridge", "target_pf": [0.03, 0.05]},
        "sweep": {"snr_db": [0, 5], "overloading_factors": [1.5, 2.0]},
        "trials": 10
    }"#;

    #[test]
    fn parses_and_expands_grid() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        let grid = cfg.grid();
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[0].system.k_u, 48);
        assert_eq!(grid[1].system.snr_db, 5.0);
        assert_eq!(grid[3].system.k_u, 64);
        assert_eq!(cfg.algorithm.labels(), vec!["ridge_pf0.03", "ridge_pf0.05"]);
        assert_eq!(cfg.hash().unwrap(), cfg.clone().hash().unwrap());
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace("\"trials\": 10", "\"trials\": 0"),
            MINIMAL.replace("[0.03, 0.05]", "[]"),
            MINIMAL.replace("[1.5, 2.0]", "[0.5]"),
            MINIMAL.replace("\"l\": 2", "\"l\": 20"),
            MINIMAL.replace("\"trials\"", "\"bogus\": 1, \"trials\""),
            MINIMAL.replace("\"ridge\"", "\"lasso\""),
        ];
        for text in bad {
            assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))), "{text}");
        }
    }
}
