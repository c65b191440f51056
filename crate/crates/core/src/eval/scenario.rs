use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::trace::{Trace, TraceRecord};
use crate::env::{
    build_observation, detect_collision, step_world, target_position, AgentRole, AgentState,
    LeaderMode, Polar, WorldConfig, WorldState,
};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::learner::{stream_rng, streams};
use crate::net::Network;
use crate::policy::{follower_velocity, DualPolicy, Mode, PolicyConfig};
use crate::reward::{reward_registry, RewardConfig, RewardContext, RewardModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowerSpec {
    /// Formation slot relative to the leader, world frame.
    pub offset: Vec2,
    /// Initial position; absent means the follower starts on its slot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec2>,
}

/// A named evaluation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub leader: LeaderMode,
    /// Leader start; defaults to the first path waypoint, or the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leader_start: Option<Vec2>,
    pub followers: Vec<FollowerSpec>,
    #[serde(default)]
    pub obstacles: Vec<Vec2>,
    pub steps: u64,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

const BUILTIN_SCENARIOS: &str = include_str!("../../data/scenarios.json");

pub fn builtin_scenarios() -> Vec<Scenario> {
    serde_json::from_str(BUILTIN_SCENARIOS).expect("bundled scenario file is valid")
}

pub fn find_scenario<'a>(scenarios: &'a [Scenario], name: &str) -> Result<&'a Scenario> {
    scenarios.iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownName {
        kind: "scenario",
        name: name.to_string(),
        known: scenarios
            .iter()
            .map(|s| s.name.as_str())
            .collect::<Vec<_>>()
            .join(", "),
    })
}

impl Scenario {
    pub fn validate(&self, world: &WorldConfig) -> Result<()> {
        if self.followers.is_empty() {
            return Err(Error::Config(format!("scenario {} has no followers", self.name)));
        }
        self.leader.validate(world.arena_half_extent)?;
        let inside = |p: Vec2| p.is_finite() && p.clamp_box(world.arena_half_extent) == p;
        let starts = self.initial_positions(world);
        if !starts.iter().all(|&p| inside(p)) {
            return Err(Error::Config(format!(
                "scenario {} places an agent outside the arena",
                self.name
            )));
        }
        Ok(())
    }

    pub fn leader_start(&self, world: &WorldConfig) -> Vec2 {
        self.leader_start.unwrap_or_else(|| {
            self.leader
                .waypoints(world.circle_waypoints)
                .map_or(Vec2::ZERO, |wp| wp[0])
        })
    }

    /// Leader, followers, then obstacles.
    pub fn initial_positions(&self, world: &WorldConfig) -> Vec<Vec2> {
        let leader = self.leader_start(world);
        let mut out = vec![leader];
        out.extend(
            self.followers
                .iter()
                .map(|f| f.start.unwrap_or_else(|| target_position(leader, f.offset))),
        );
        out.extend(self.obstacles.iter().copied());
        out
    }

    pub fn initial_world(&self, world: &WorldConfig) -> Result<WorldState> {
        let n_followers = self.followers.len();
        let agents = self
            .initial_positions(world)
            .into_iter()
            .enumerate()
            .map(|(id, p)| {
                let role = match id {
                    0 => AgentRole::Leader,
                    k if k <= n_followers => AgentRole::Follower,
                    _ => AgentRole::Obstacle,
                };
                AgentState::new(id, role, p)
            })
            .collect();
        WorldState::new(agents)
    }
}

/// Settings shared by every scenario run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalContext {
    pub world: WorldConfig,
    pub policy: PolicyConfig,
    pub reward: RewardConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub trace: Trace,
    /// Steps (after the initial one) at which some agent touched another.
    pub collision_steps: usize,
    pub min_separation: f64,
}

/// Runs a scenario with one [`DualPolicy`] per follower. Followers act on
/// the pre-step world simultaneously; their rows carry the reward of the
/// active phase's model for the chosen action.
pub fn run_scenario(
    scenario: &Scenario,
    reach: Arc<Network>,
    keep: Arc<Network>,
    seed: u64,
    ctx: &EvalContext,
) -> Result<ScenarioRun> {
    ctx.world.validate()?;
    scenario.validate(&ctx.world)?;
    let registry = reward_registry();
    let reach_reward = registry.build("reach", &ctx.reward)?;
    let keep_reward = registry.build("keep", &ctx.reward)?;
    let mut leader = ctx.world.leader_controller(&scenario.leader);
    let mut rng = stream_rng(seed, streams::ENVIRONMENT);
    let mut policies = scenario
        .followers
        .iter()
        .map(|_| DualPolicy::new(reach.clone(), keep.clone(), ctx.policy))
        .collect::<Result<Vec<_>>>()?;

    let mut world = scenario.initial_world(&ctx.world)?;
    let mut trace = Trace::default();
    let mut min_sep = world.min_separation();
    let mut collision_steps = 0;
    let no_moves = vec![None; scenario.followers.len()];
    record(&mut trace, &world, scenario, &no_moves);

    for _ in 0..scenario.steps {
        let mut commands = BTreeMap::new();
        let leader_pos = world.agents[0].position;
        commands.insert(0, leader.command(leader_pos, world.time, &mut rng));
        let mut moves = Vec::with_capacity(policies.len());
        for (k, (policy, spec)) in policies.iter_mut().zip(&scenario.followers).enumerate() {
            let id = k + 1;
            let obs = build_observation(&world, id, spec.offset, ctx.world.far_distance)?;
            let action = policy.policy_action(&obs, ctx.world.d_max);
            commands.insert(id, follower_velocity(action, ctx.world.follower_speed));
            let me = world.agents[id].position;
            let others: Vec<Polar> = world
                .agents
                .iter()
                .filter(|a| a.id != id)
                .map(|a| Polar::of(a.position - me))
                .collect();
            moves.push((obs.to_target, others, action, policy.mode()));
        }
        world = step_world(&world, &commands, &ctx.world)?;
        let mut followed = Vec::with_capacity(moves.len());
        for (to_target, others, action, mode) in moves {
            let model: &dyn RewardModel = match mode {
                Mode::Reaching => reach_reward.as_ref(),
                Mode::Keeping => keep_reward.as_ref(),
            };
            let reward = model
                .evaluate(&RewardContext {
                    to_target,
                    obstacles: &others,
                    action,
                })
                .total;
            followed.push(Some((action, reward, mode)));
        }
        record(&mut trace, &world, scenario, &followed);
        min_sep = min_sep.min(world.min_separation());
        let collided = world
            .agents
            .iter()
            .any(|a| detect_collision(&world, a.id, ctx.world.robot_radius));
        collision_steps += usize::from(collided);
    }
    Ok(ScenarioRun {
        trace,
        collision_steps,
        min_separation: min_sep,
    })
}

type Move = Option<(crate::geometry::ActionIndex, f64, Mode)>;

fn record(trace: &mut Trace, world: &WorldState, scenario: &Scenario, moves: &[Move]) {
    let leader = world.agents[0].position;
    for a in &world.agents {
        let follower = (a.role == AgentRole::Follower).then(|| a.id - 1);
        let mv = follower.and_then(|k| moves[k]);
        let dist_err = follower.map(|k| {
            target_position(leader, scenario.followers[k].offset).distance(a.position)
        });
        trace.records.push(TraceRecord {
            step: world.step_count,
            time: world.time,
            agent_id: a.id,
            role: a.role,
            x: a.position.x,
            y: a.position.y,
            action: mv.map(|m| m.0),
            reward: mv.map(|m| m.1),
            mode: mv.map(|m| m.2),
            dist_err,
        });
    }
}
