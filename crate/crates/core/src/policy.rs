//! Deployed controller: reach network until arrival, keep network afterwards.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{normalize_observation, Observation};
use crate::error::{Error, Result};
use crate::geometry::{action_direction, ActionIndex, Vec2};
use crate::net::{ForwardScratch, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Reaching,
    Keeping,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Reaching => "reaching",
            Mode::Keeping => "keeping",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reaching" => Ok(Mode::Reaching),
            "keeping" => Ok(Mode::Keeping),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Target distance at which the keep network takes over.
    pub switch_radius: f64,
    /// Target distance beyond which control returns to the reach network.
    pub release_radius: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            switch_radius: 0.1,
            release_radius: 0.25,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.switch_radius > 0.0) || self.release_radius < self.switch_radius {
            return Err(Error::Config(format!(
                "need 0 < switch_radius <= release_radius, got {} and {}",
                self.switch_radius, self.release_radius
            )));
        }
        Ok(())
    }
}

/// Mode transition rule with hysteresis between the two radii.
pub fn next_mode(mode: Mode, target_distance: f64, cfg: &PolicyConfig) -> Mode {
    match mode {
        Mode::Reaching if target_distance <= cfg.switch_radius => Mode::Keeping,
        Mode::Keeping if target_distance > cfg.release_radius => Mode::Reaching,
        m => m,
    }
}

/// Per-follower switching controller. Networks are shared read-only.
#[derive(Debug, Clone)]
pub struct DualPolicy {
    reach: Arc<Network>,
    keep: Arc<Network>,
    cfg: PolicyConfig,
    mode: Mode,
    scratch: ForwardScratch,
}

impl DualPolicy {
    pub fn new(reach: Arc<Network>, keep: Arc<Network>, cfg: PolicyConfig) -> Result<Self> {
        cfg.validate()?;
        for (name, net) in [("reach", &reach), ("keep", &keep)] {
            if net.input_len() != crate::env::OBS_DIM
                || net.output_len() != crate::geometry::NUM_ACTIONS
            {
                return Err(Error::Shape(format!(
                    "{name} network has architecture {:?}",
                    net.arch()
                )));
            }
        }
        Ok(DualPolicy {
            reach,
            keep,
            cfg,
            mode: Mode::Reaching,
            scratch: ForwardScratch::default(),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    /// Updates the mode from the current target distance, then returns the
    /// active network's greedy action.
    pub fn policy_action(&mut self, obs: &Observation, d_max: f64) -> ActionIndex {
        self.mode = next_mode(self.mode, obs.to_target.distance, &self.cfg);
        let net = match self.mode {
            Mode::Reaching => &self.reach,
            Mode::Keeping => &self.keep,
        };
        net.greedy_action(&normalize_observation(obs, d_max), &mut self.scratch)
    }
}

/// Velocity for a discrete heading at constant speed.
pub fn follower_velocity(action: ActionIndex, follower_speed: f64) -> Vec2 {
    action_direction(action) * follower_speed
}
