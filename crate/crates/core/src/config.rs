//! Run configuration: one serializable document describing an experiment.
//! Every field has a default, so a config file only needs the overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{DrRanges, FinetuneConfig, SysIdConfig};
use crate::envs::{EnvKind, EnvSpec, GapKind, TargetGap, TaskRewardConfig};
use crate::error::{Error, Result};
use crate::identify::{IdentifyConfig, RefineConfig};
use crate::ppo::PolicyTrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub gap: GapKind,
    /// Explicit gap magnitudes; `None` uses the shipped defaults for `gap`.
    pub gap_spec: Option<TargetGap>,
    /// Explicit system constants; `None` uses the shipped spec for `env`.
    pub spec: Option<EnvSpec>,
    pub seed: u64,
    /// Seeds for across-seed statistics in `evaluate`.
    pub seeds: Vec<u64>,
    /// Target trajectories collected for identification.
    pub n_trajectories: usize,
    pub obs_noise: bool,
    pub torque_noise: bool,
    pub reward: Option<TaskRewardConfig>,
    pub behavior: PolicyTrainConfig,
    pub identify: IdentifyConfig,
    pub refine: RefineConfig,
    pub finetune: FinetuneConfig,
    /// Randomization ranges; `None` uses the shipped ranges for `env`.
    pub dr_ranges: Option<DrRanges>,
    pub dr_train: PolicyTrainConfig,
    pub sysid: SysIdConfig,
    pub eval_episodes: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Hopper1d,
            gap: GapKind::Power,
            gap_spec: None,
            spec: None,
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            n_trajectories: 200,
            obs_noise: true,
            torque_noise: true,
            reward: None,
            behavior: PolicyTrainConfig::default(),
            identify: IdentifyConfig::default(),
            refine: RefineConfig::default(),
            finetune: FinetuneConfig::default(),
            dr_ranges: None,
            dr_train: PolicyTrainConfig::default(),
            sysid: SysIdConfig::default(),
            eval_episodes: 30,
            out: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Source-system constants with the noise toggles applied.
    pub fn source_spec(&self) -> EnvSpec {
        let mut spec = self.spec.clone().unwrap_or_else(|| EnvSpec::by_kind(self.env));
        if !self.obs_noise {
            spec.obs_noise = 0.0;
        }
        if !self.torque_noise {
            spec.torque_noise = 0.0;
        }
        spec
    }

    pub fn target_gap(&self) -> TargetGap {
        self.gap_spec.clone().unwrap_or_else(|| TargetGap::default_for(self.env, self.gap))
    }

    pub fn task_reward(&self) -> TaskRewardConfig {
        self.reward.clone().unwrap_or_else(|| TaskRewardConfig::default_for(self.env))
    }

    pub fn dr(&self) -> DrRanges {
        self.dr_ranges.clone().unwrap_or_else(|| DrRanges::default_for(&self.source_spec()))
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.source_spec();
        if spec.kind != self.env {
            return Err(Error::Config("spec.kind disagrees with env".into()));
        }
        spec.validate()?;
        self.target_gap().validate(&spec)?;
        if self.n_trajectories == 0 {
            return Err(Error::Config("n_trajectories must be at least 1".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        self.dr().validate()?;
        Ok(())
    }
}
