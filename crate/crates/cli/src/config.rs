//! Experiment configuration, read from JSON.

use std::path::{Path, PathBuf};

use accsurf_core::calibration::{CalibrationConfig, CalibrationMode};
use accsurf_core::estimators::{EstimatorKind, GpConfig};
use accsurf_core::exploration::ExplorationConfig;
use accsurf_core::world::WorldSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Instance counts drawn per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Labeled instances with known arms for `estimate`.
    pub labeled: usize,
    /// Seed set with known arms (calibration and exploration warm start).
    pub seed_size: usize,
    /// Unlabeled pool that exploration draws from.
    pub pool_size: usize,
    /// Instances whose arms define which gold arms are active.
    pub eval_size: usize,
    /// Held-out instances for calibration NLL.
    pub test_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            labeled: 2000,
            seed_size: 500,
            pool_size: 10_000,
            eval_size: 20_000,
            test_size: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TenArmConfig {
    pub estimators: Vec<EstimatorKind>,
    pub seeds: Vec<u64>,
    pub warm_steps: usize,
}

impl Default for TenArmConfig {
    fn default() -> Self {
        Self {
            estimators: vec![
                EstimatorKind::BetaGP,
                EstimatorKind::BetaGpSl,
                EstimatorKind::BetaGpSlp,
            ],
            seeds: (0..20).collect(),
            warm_steps: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label written into metric rows.
    pub name: String,
    pub world: WorldSpec,
    /// The world is fixed across run seeds.
    pub world_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub calibration_modes: Vec<CalibrationMode>,
    pub gp: GpConfig,
    pub calibration: CalibrationConfig,
    /// Template for every exploration cell; its estimator and seed are
    /// replaced per cell.
    pub exploration: ExplorationConfig,
    /// Also run random-arm exploration with Beta-I.
    pub random_baseline: bool,
    pub data: DataConfig,
    pub ten_arm: TenArmConfig,
    /// Prior accuracy mass λ for warm starts.
    pub prior_strength: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            world: WorldSpec::default(),
            world_seed: 0,
            estimators: vec![
                EstimatorKind::CPredictor,
                EstimatorKind::BetaI,
                EstimatorKind::BernGP,
                EstimatorKind::BetaGP,
                EstimatorKind::BetaGpSl,
                EstimatorKind::BetaGpSlp,
            ],
            calibration_modes: CalibrationMode::ALL.to_vec(),
            gp: GpConfig::default(),
            calibration: CalibrationConfig::default(),
            exploration: ExplorationConfig::default(),
            random_baseline: true,
            data: DataConfig::default(),
            ten_arm: TenArmConfig::default(),
            prior_strength: 0.1,
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> CliResult<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> CliResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let cfg = |e: accsurf_core::Error| CliError::Config(e.to_string());
        if self.seeds.is_empty() || self.ten_arm.seeds.is_empty() {
            return Err(CliError::Config("at least one seed is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config(
                "at least one estimator is required".into(),
            ));
        }
        if self.data.seed_size == 0 || self.data.labeled == 0 || self.data.eval_size == 0 {
            return Err(CliError::Config("data sizes must be positive".into()));
        }
        if !(self.prior_strength > 0.0 && self.prior_strength.is_finite()) {
            return Err(CliError::Config("prior_strength must be positive".into()));
        }
        self.world.validate().map_err(cfg)?;
        self.gp.validate().map_err(cfg)?;
        self.calibration.validate().map_err(cfg)?;
        self.exploration.validate().map_err(cfg)?;
        Ok(())
    }
}
