//! Run configuration files and the glue that turns them into training runs.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::task::{FormationEnv, TaskConfig};
use crate::env::WorldConfig;
use crate::error::{Error, Result};
use crate::eval::{builtin_scenarios, EvalContext, Scenario};
use crate::learner::{stream_rng, streams, train, TrainConfig, TrainOutcome};
use crate::net::ModelKind;
use crate::policy::PolicyConfig;
use crate::reward::{reward_registry, RewardConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingEnvs {
    pub reach: TaskConfig,
    pub keep: TaskConfig,
}

impl Default for TrainingEnvs {
    fn default() -> Self {
        TrainingEnvs {
            reach: TaskConfig::reach(),
            keep: TaskConfig::keep(),
        }
    }
}

impl TrainingEnvs {
    pub fn for_model(&self, kind: ModelKind) -> &TaskConfig {
        match kind {
            ModelKind::Reach => &self.reach,
            ModelKind::Keep => &self.keep,
        }
    }
}

/// Settings of the reward-design comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareConfig {
    pub seeds: Vec<u64>,
    /// Reward model per arm; every arm trains a keep model.
    pub arms: Vec<String>,
    pub radius: f64,
    pub window: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seeds: vec![1, 2, 3],
            arms: vec!["keep".into(), "state-only".into()],
            radius: 0.15,
            window: 10,
        }
    }
}

/// Everything a run needs, as stored in a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub train: TrainConfig,
    pub reward: RewardConfig,
    pub policy: PolicyConfig,
    pub training_env: TrainingEnvs,
    pub scenarios: Vec<Scenario>,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldConfig::default(),
            train: TrainConfig::default(),
            reward: RewardConfig::default(),
            policy: PolicyConfig::default(),
            training_env: TrainingEnvs::default(),
            scenarios: builtin_scenarios(),
            compare: CompareConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Table-scale defaults with the reduced replay memory and episode count
    /// used for desk runs.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.train.replay_capacity = 20_000;
        cfg.train.replay_min = 5_000;
        cfg.train.episodes = 2_000;
        cfg
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| {
            Error::parse(
                context,
                format!("line {}, column {}: {e}", e.line(), e.column()),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        self.reward.validate()?;
        self.policy.validate()?;
        self.training_env.reach.validate(&self.world)?;
        self.training_env.keep.validate(&self.world)?;
        let registry = reward_registry();
        if let Some(name) = &self.train.reward {
            registry.build(name, &self.reward)?;
        }
        for arm in &self.compare.arms {
            registry.build(arm, &self.reward)?;
        }
        if !(self.compare.radius > 0.0) || self.compare.window == 0 {
            return Err(Error::Config("compare radius and window must be positive".into()));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            s.validate(&self.world)?;
            if self.scenarios[..i].iter().any(|o| o.name == s.name) {
                return Err(Error::Config(format!("duplicate scenario name {}", s.name)));
            }
        }
        Ok(())
    }

    pub fn eval_context(&self) -> EvalContext {
        EvalContext {
            world: self.world.clone(),
            policy: self.policy,
            reward: self.reward,
        }
    }

    /// Training settings for one run: `kind`, `seed` and the reward model
    /// (defaulting to the one matching `kind`) override the file values.
    pub fn train_config(&self, kind: ModelKind, seed: u64, reward: Option<&str>) -> TrainConfig {
        let mut t = self.train.clone();
        t.model_kind = kind;
        t.rng_seed = seed;
        if let Some(r) = reward {
            t.reward = Some(r.to_string());
        }
        t
    }

    /// Builds the training world for `train` and runs it.
    pub fn train_model(&self, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
        let reward = reward_registry().build(train_cfg.reward_name(), &self.reward)?;
        let env_seed = stream_rng(train_cfg.rng_seed, streams::ENVIRONMENT).random::<u64>();
        let mut env = FormationEnv::new(
            self.world.clone(),
            self.training_env.for_model(train_cfg.model_kind).clone(),
            reward,
            env_seed,
        )?;
        train(&mut env, train_cfg)
    }
}
