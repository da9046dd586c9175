//! Run configuration: every module's settings plus the global seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotate::AnnotateConfig;
use crate::policy::PolicyConfig;
use crate::prompt::StyleConfig;
use crate::select::SelectConfig;
use crate::world::WorldConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertConfig {
    pub max_steps: usize,
    /// Fresh resets tried before a task counts as unsolvable.
    pub retries: usize,
    pub demos_per_task: usize,
    /// Within this distance of a phase goal the expert closes or opens.
    pub goal_tolerance: f64,
    /// Chance that a movement step is executed with added noise. The stored
    /// label stays the clean action, so demos show how to recover.
    pub noise_prob: f64,
    /// Per-axis standard deviation of that noise, in units of max_step.
    pub noise_scale: f64,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self { max_steps: 150, retries: 8, demos_per_task: 100, goal_tolerance: 0.004, noise_prob: 0.5, noise_scale: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    /// Metrics are logged every this many steps.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 20_000, log_every: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub trials: usize,
    pub max_steps: usize,
    /// Actions executed from each sampled chunk before sampling again.
    pub execute: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { trials: 50, max_steps: 120, execute: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblateConfig {
    /// Task list the compared policies are trained on.
    pub train_tasks: String,
    /// Task lists each policy is evaluated on.
    pub suites: Vec<String>,
    /// Trials per task.
    pub trials: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            train_tasks: "mixed".into(),
            suites: vec!["mixed".into(), "probe_spatial".into(), "probe_obstacle".into()],
            trials: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub world: WorldConfig,
    pub annotate: AnnotateConfig,
    pub select: SelectConfig,
    pub style: StyleConfig,
    pub policy: PolicyConfig,
    pub expert: ExpertConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs"),
            world: WorldConfig::default(),
            annotate: AnnotateConfig::default(),
            select: SelectConfig::default(),
            style: StyleConfig::default(),
            policy: PolicyConfig::default(),
            expert: ExpertConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_string(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.policy.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.style.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.policy.resolution != self.world.image_size || self.style.resolution != self.world.image_size {
            return bad(format!(
                "image sizes disagree: world {}, policy {}, style {}",
                self.world.image_size, self.policy.resolution, self.style.resolution
            ));
        }
        if self.policy.max_step != self.world.max_step {
            return bad("policy.max_step must equal world.max_step".into());
        }
        if !(self.world.max_step > 0.0 && self.world.gripper_radius > 0.0) {
            return bad("world step and gripper radius must be positive".into());
        }
        if self.expert.max_steps == 0 || self.eval.max_steps == 0 || self.eval.execute == 0 {
            return bad("episode step limits and eval.execute must be positive".into());
        }
        Ok(())
    }

    /// Copy with the policy seed tied to the run seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.policy.seed = seed;
        c
    }

    /// SHA-256 of the canonical JSON form (keys sorted), so reordering keys
    /// in the source file does not change it. The output directory is left
    /// out: it says where results go, not what they are.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = value.as_object_mut() {
            o.remove("out_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
