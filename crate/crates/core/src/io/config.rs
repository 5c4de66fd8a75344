//! Experiment configuration files (TOML).
//!
//! Every field has a default, so a config file only lists what it changes.
//! Unknown keys are rejected.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::connectivity::InterpConfig;
use crate::env::{env_by_name, EnvSpec};
use crate::error::{Error, Result};
use crate::learner::{BcConfig, Td3Config, UpdateFamily};
use crate::policy::{MlpShape, ParamVector};
use crate::stabilizer::RejectionConfig;
use crate::stats::StatsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Td3Minibatch,
    GaussianPerturbation,
    BcMinibatch,
}

/// Teacher network and logged states for the behaviour-cloning update.
#[derive(Debug, Clone)]
pub struct BcTeacher {
    pub shape: Arc<MlpShape>,
    pub actor: Arc<ParamVector>,
    /// Flat states, `state_dim` per row.
    pub states: Arc<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateConfig {
    pub family: FamilyKind,
    /// Perturbation scale for the Gaussian family.
    pub sigma: f64,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self { family: FamilyKind::Td3Minibatch, sigma: 3e-4, batch_size: 64, lr: 3e-4 }
    }
}

impl UpdateConfig {
    /// The update family; behaviour cloning needs the teacher and its logged states.
    pub fn family(&self, bc_teacher: Option<BcTeacher>) -> Result<UpdateFamily> {
        Ok(match self.family {
            FamilyKind::Td3Minibatch => UpdateFamily::Td3Minibatch { batch_size: self.batch_size, lr: self.lr },
            FamilyKind::GaussianPerturbation => UpdateFamily::GaussianPerturbation { sigma: self.sigma },
            FamilyKind::BcMinibatch => {
                let t = bc_teacher.ok_or_else(|| Error::InvalidConfig("bc-minibatch needs a teacher checkpoint".into()))?;
                UpdateFamily::BcMinibatch {
                    teacher_shape: t.shape,
                    teacher: t.actor,
                    states: t.states,
                    batch_size: self.batch_size,
                    lr: self.lr,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Post-update samples per distribution.
    pub n: usize,
    pub ltp_alpha: f64,
    pub cvar_alpha: f64,
    pub n_boot: usize,
    pub grid_res: usize,
    pub range: f64,
    /// Zoom factors, each applied to the previous window.
    pub zoom: Vec<f64>,
    pub interp_points: usize,
    pub interp_sigma: f64,
    pub interp_perturb: usize,
    pub btp_threshold: f64,
    /// Pairs per condition per environment.
    pub pairs: usize,
    /// Buffer stride for LTP-over-states sweeps.
    pub stride: usize,
    /// Samples per state in LTP-over-states sweeps.
    pub state_n: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let interp = InterpConfig::default();
        Self {
            n: crate::purd::DEFAULT_SAMPLES,
            ltp_alpha: 0.5,
            cvar_alpha: 0.1,
            n_boot: 1000,
            grid_res: crate::landscape::DEFAULT_GRID_RES,
            range: crate::landscape::DEFAULT_RANGE,
            zoom: vec![0.1, 0.1],
            interp_points: interp.n_points,
            interp_sigma: interp.sigma,
            interp_perturb: interp.n_perturb,
            btp_threshold: interp.threshold_frac,
            pairs: crate::connectivity::DEFAULT_PAIRS,
            stride: 1000,
            state_n: 100,
        }
    }
}

impl AnalysisConfig {
    pub fn stats(&self) -> StatsConfig {
        StatsConfig { ltp_alpha: self.ltp_alpha, cvar_alpha: self.cvar_alpha, lower_bound: 0.0, n_boot: self.n_boot }
    }

    pub fn interp(&self) -> InterpConfig {
        InterpConfig {
            n_points: self.interp_points,
            sigma: self.interp_sigma,
            n_perturb: self.interp_perturb,
            threshold_frac: self.btp_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub seed: u64,
    pub out_dir: String,
    /// Independent training runs; run `r` uses seed `seed + r`.
    pub runs: usize,
    pub learner: Td3Config,
    pub update: UpdateConfig,
    pub analysis: AnalysisConfig,
    pub rejection: RejectionConfig,
    pub bc: BcConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: "corridor-walk".into(),
            seed: 0,
            out_dir: "out".into(),
            runs: 1,
            learner: Td3Config::default(),
            update: UpdateConfig::default(),
            analysis: AnalysisConfig::default(),
            rejection: RejectionConfig::default(),
            bc: BcConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        env_by_name(&self.env)?;
        self.learner.validate()?;
        self.rejection.validate()?;
        let a = &self.analysis;
        if a.n == 0 || a.grid_res < 2 || a.interp_points < 2 || a.interp_perturb == 0 || a.stride == 0 || a.state_n == 0 {
            return Err(Error::InvalidConfig("analysis counts out of range".into()));
        }
        if !(a.range > 0.0) || a.zoom.iter().any(|z| !(*z > 0.0 && *z < 1.0)) {
            return Err(Error::InvalidConfig("range must be positive and zoom factors in (0, 1)".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        env_by_name(&self.env)
    }

    /// SHA-256 (hex) of the canonical JSON form; independent of file formatting.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let mut cfg = ExperimentConfig::default();
        cfg.analysis.interp_sigma = 0.1 + 0.2;
        cfg.learner.actor_lr = 1.0 / 3.0;
        cfg.seed = u64::MAX / 3;
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("env = \"pendulum-balance\"\n[analysis]\nn = 50\n").unwrap();
        assert_eq!(cfg.analysis.n, 50);
        assert_eq!(cfg.analysis.grid_res, 41);
        assert_eq!(cfg.learner.batch_size, 64);
        let reformatted = ExperimentConfig::from_toml("env=\"pendulum-balance\"\n\n[analysis]\nn=50").unwrap();
        assert_eq!(cfg.hash(), reformatted.hash());
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("bogus = 1"), Err(Error::ConfigParse(_))));
        assert!(ExperimentConfig::from_toml("env = \"nowhere\"").is_err());
        assert!(ExperimentConfig::from_toml("[analysis]\ngrid_res = 1").is_err());
    }
}
