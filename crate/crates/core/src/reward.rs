//! Shaped rewards for formation reaching and keeping.
//!
//! A state-action reward multiplies a distance factor by an alignment term
//! that is positive only when the chosen direction is within `3π/8` of the
//! entity's bearing. The reaching reward subtracts the largest obstacle term
//! taken over every other agent in the world; the keeping reward drops the
//! obstacle term. The state-only reward exists for comparison experiments.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::env::Polar;
use crate::error::{Error, Result};
use crate::geometry::{angular_difference, ActionIndex};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    /// Total number of actions.
    pub n_a: u32,
    /// Actions counted as moving the wrong way.
    pub n_a_neg: u32,
    /// Offset in the obstacle distance factor `2^(1/(d + ε))`.
    pub obstacle_epsilon: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            n_a: 8,
            n_a_neg: 5,
            obstacle_epsilon: 0.1,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0 < self.n_a_neg && self.n_a_neg < self.n_a) {
            return Err(Error::Config(format!(
                "need 0 < n_a_neg < n_a, got n_a_neg={} n_a={}",
                self.n_a_neg, self.n_a
            )));
        }
        if !(self.obstacle_epsilon > 0.0) {
            return Err(Error::Config("obstacle_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub r_t: f64,
    /// Largest obstacle term; zero when no obstacle term applies.
    pub r_o_max: f64,
    pub total: f64,
}

/// `2^d`.
pub fn distance_reward(d: f64) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be >= 0, got {d}")));
    }
    Ok(d.exp2())
}

/// `1 - δ/π - n_a⁻/n_a`, with `δ` the wrapped angle between bearing and action.
pub fn alignment_reward(entity_bearing: f64, action: ActionIndex, cfg: &RewardConfig) -> f64 {
    let delta = angular_difference(entity_bearing, action.angle());
    1.0 - delta / PI - cfg.n_a_neg as f64 / cfg.n_a as f64
}

pub fn target_reward(to_target: Polar, action: ActionIndex, cfg: &RewardConfig) -> f64 {
    debug_assert!(to_target.distance >= 0.0);
    to_target.distance.exp2() * alignment_reward(to_target.bearing, action, cfg)
}

pub fn obstacle_reward(to_obstacle: Polar, action: ActionIndex, cfg: &RewardConfig) -> f64 {
    debug_assert!(to_obstacle.distance >= 0.0);
    let factor = (1.0 / (to_obstacle.distance + cfg.obstacle_epsilon)).exp2();
    factor * alignment_reward(to_obstacle.bearing, action, cfg)
}

/// Target term minus the maximum obstacle term over `obstacles`.
pub fn reach_reward(
    obstacles: &[Polar],
    to_target: Polar,
    action: ActionIndex,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let r_t = target_reward(to_target, action, cfg);
    let r_o_max = obstacles
        .iter()
        .map(|&o| obstacle_reward(o, action, cfg))
        .reduce(f64::max);
    match r_o_max {
        Some(m) => RewardBreakdown {
            r_t,
            r_o_max: m,
            total: r_t - m,
        },
        None => RewardBreakdown {
            r_t,
            r_o_max: 0.0,
            total: r_t,
        },
    }
}

pub fn keep_reward(to_target: Polar, action: ActionIndex, cfg: &RewardConfig) -> f64 {
    target_reward(to_target, action, cfg)
}

/// Negative distance to the target.
pub fn state_only_reward(to_target: Polar) -> f64 {
    -to_target.distance
}

/// Everything a reward model may look at for one transition.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    /// Target as seen from the state the action was chosen in.
    pub to_target: Polar,
    /// Every other agent as seen from that same state.
    pub obstacles: &'a [Polar],
    pub action: ActionIndex,
}

/// A reward function selectable by name.
pub trait RewardModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn evaluate(&self, ctx: &RewardContext<'_>) -> RewardBreakdown;
}

pub struct ReachReward(pub RewardConfig);

impl RewardModel for ReachReward {
    fn name(&self) -> &'static str {
        "reach"
    }

    fn evaluate(&self, ctx: &RewardContext<'_>) -> RewardBreakdown {
        reach_reward(ctx.obstacles, ctx.to_target, ctx.action, &self.0)
    }
}

pub struct KeepReward(pub RewardConfig);

impl RewardModel for KeepReward {
    fn name(&self) -> &'static str {
        "keep"
    }

    fn evaluate(&self, ctx: &RewardContext<'_>) -> RewardBreakdown {
        let r = keep_reward(ctx.to_target, ctx.action, &self.0);
        RewardBreakdown {
            r_t: r,
            r_o_max: 0.0,
            total: r,
        }
    }
}

/// Scores the state reached, independent of the action that reached it.
pub struct StateOnlyReward;

impl RewardModel for StateOnlyReward {
    fn name(&self) -> &'static str {
        "state-only"
    }

    fn evaluate(&self, ctx: &RewardContext<'_>) -> RewardBreakdown {
        let r = state_only_reward(ctx.to_target);
        RewardBreakdown {
            r_t: r,
            r_o_max: 0.0,
            total: r,
        }
    }
}

/// Registry holding `reach`, `keep` and `state-only`.
pub fn reward_registry() -> Registry<dyn RewardModel, RewardConfig> {
    let mut r: Registry<dyn RewardModel, RewardConfig> = Registry::new("reward model");
    r.register("reach", |c| Box::new(ReachReward(*c)))
        .register("keep", |c| Box::new(KeepReward(*c)))
        .register("state-only", |_| Box::new(StateOnlyReward));
    r
}
