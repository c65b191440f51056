//! Deterministic 2D world with single-integrator agents.

mod leader;
pub mod task;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use leader::{
    leader_command, LeaderController, LeaderMode, RandomWalkLeader, StaticLeader, WaypointLeader,
};

use crate::error::{Error, Result};
use crate::geometry::{bearing, Vec2};

/// Length of the normalized feature vector fed to the networks.
pub const OBS_DIM: usize = 8;

pub type Features = [f64; OBS_DIM];

/// Tolerance on commanded speeds against the configured role speed.
const SPEED_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Leader,
    Follower,
    Obstacle,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Leader => "leader",
            AgentRole::Follower => "follower",
            AgentRole::Obstacle => "obstacle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub role: AgentRole,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl AgentState {
    pub fn new(id: usize, role: AgentRole, position: Vec2) -> Self {
        AgentState {
            id,
            role,
            position,
            velocity: Vec2::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub dt: f64,
    pub arena_half_extent: f64,
    pub robot_radius: f64,
    pub leader_speed: f64,
    pub follower_speed: f64,
    pub leader_mode: LeaderMode,
    pub rng_seed: u64,
    /// Waypoints used to discretize a circular leader path.
    pub circle_waypoints: usize,
    pub waypoint_tolerance: f64,
    /// Distance of the virtual obstacle that pads missing obstacle slots.
    pub far_distance: f64,
    /// Distance scale for feature normalization.
    pub d_max: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            dt: 0.1,
            arena_half_extent: 2.5,
            robot_radius: 0.037,
            leader_speed: 0.3,
            follower_speed: 0.36,
            leader_mode: LeaderMode::Static {},
            rng_seed: 0,
            circle_waypoints: 64,
            waypoint_tolerance: 0.05,
            far_distance: 100.0,
            d_max: 5.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("arena_half_extent", self.arena_half_extent),
            ("robot_radius", self.robot_radius),
            ("follower_speed", self.follower_speed),
            ("waypoint_tolerance", self.waypoint_tolerance),
            ("far_distance", self.far_distance),
            ("d_max", self.d_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.leader_speed >= 0.0) {
            return Err(Error::Config("leader_speed must be non-negative".into()));
        }
        if self.follower_speed <= self.leader_speed {
            return Err(Error::Config(format!(
                "follower_speed {} must exceed leader_speed {}",
                self.follower_speed, self.leader_speed
            )));
        }
        if self.circle_waypoints < 3 {
            return Err(Error::Config("circle_waypoints must be at least 3".into()));
        }
        self.leader_mode.validate(self.arena_half_extent)
    }

    pub fn speed_for(&self, role: AgentRole) -> Option<f64> {
        match role {
            AgentRole::Leader => Some(self.leader_speed),
            AgentRole::Follower => Some(self.follower_speed),
            AgentRole::Obstacle => None,
        }
    }

    pub fn leader_controller(&self, mode: &LeaderMode) -> Box<dyn LeaderController> {
        mode.controller(self.leader_speed, self.circle_waypoints, self.waypoint_tolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub agents: Vec<AgentState>,
    pub time: f64,
    pub step_count: u64,
}

impl WorldState {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        let leaders = agents.iter().filter(|a| a.role == AgentRole::Leader).count();
        if leaders != 1 {
            return Err(Error::Config(format!(
                "world needs exactly one leader, found {leaders}"
            )));
        }
        let mut ids: Vec<usize> = agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("agent ids must be unique".into()));
        }
        if agents.iter().any(|a| !a.position.is_finite()) {
            return Err(Error::InvalidArgument("non-finite agent position".into()));
        }
        Ok(WorldState {
            agents,
            time: 0.0,
            step_count: 0,
        })
    }

    pub fn agent(&self, id: usize) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn leader(&self) -> Option<&AgentState> {
        self.agents.iter().find(|a| a.role == AgentRole::Leader)
    }

    pub fn followers(&self) -> impl Iterator<Item = &AgentState> {
        self.agents.iter().filter(|a| a.role == AgentRole::Follower)
    }

    /// Smallest distance between any two agents, infinite for fewer than two.
    pub fn min_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.agents.iter().enumerate() {
            for b in &self.agents[i + 1..] {
                best = best.min(a.position.distance(b.position));
            }
        }
        best
    }
}

/// Advances every agent by one Euler step of `x' = a`, clamping to the arena.
pub fn step_world(
    world: &WorldState,
    commands: &BTreeMap<usize, Vec2>,
    config: &WorldConfig,
) -> Result<WorldState> {
    let mut agents = world.agents.clone();
    for agent in &mut agents {
        let command = match commands.get(&agent.id) {
            Some(c) => *c,
            None if agent.role == AgentRole::Obstacle => Vec2::ZERO,
            None => {
                return Err(Error::Config(format!(
                    "missing command for {} {}",
                    agent.role.as_str(),
                    agent.id
                )))
            }
        };
        if !command.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite command for agent {}",
                agent.id
            )));
        }
        if let Some(speed) = config.speed_for(agent.role) {
            let n = command.norm();
            if n > SPEED_TOLERANCE && (n - speed).abs() > SPEED_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "agent {} commanded at {n} m/s, role speed is {speed}",
                    agent.id
                )));
            }
        }
        agent.velocity = command;
        agent.position = (agent.position + command * config.dt).clamp_box(config.arena_half_extent);
    }
    let step_count = world.step_count + 1;
    Ok(WorldState {
        agents,
        time: step_count as f64 * config.dt,
        step_count,
    })
}

/// Formation slot of a follower: the leader position shifted by a world-frame offset.
pub fn target_position(leader_position: Vec2, offset: Vec2) -> Vec2 {
    leader_position + offset
}

/// Vectors from `agent_id` to its `k` nearest other agents, nearest first.
///
/// Every other agent counts as an obstacle, the leader included. Ties go to
/// the lower id. Missing slots are filled with a virtual obstacle at
/// `far_distance` along bearing 0.
pub fn nearest_obstacles(
    world: &WorldState,
    agent_id: usize,
    k: usize,
    far_distance: f64,
) -> Result<Vec<Vec2>> {
    let me = world
        .agent(agent_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no agent with id {agent_id}")))?;
    let mut others: Vec<(f64, usize, Vec2)> = world
        .agents
        .iter()
        .filter(|a| a.id != agent_id)
        .map(|a| {
            let v = a.position - me.position;
            (v.norm(), a.id, v)
        })
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<Vec2> = others.into_iter().take(k).map(|(_, _, v)| v).collect();
    while out.len() < k {
        out.push(Vec2::new(far_distance, 0.0));
    }
    Ok(out)
}

/// Distance and world-frame bearing of a relative vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Polar {
    pub distance: f64,
    pub bearing: f64,
}

impl Polar {
    pub const fn new(distance: f64, bearing: f64) -> Self {
        Polar { distance, bearing }
    }

    /// Polar form of `v`; the zero vector maps to `(0, 0)`.
    pub fn of(v: Vec2) -> Self {
        match bearing(Vec2::ZERO, v) {
            Ok(b) => Polar::new(v.norm(), b),
            Err(_) => Polar::default(),
        }
    }
}

/// Local view of one follower: leader, formation target and two nearest obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub to_leader: Polar,
    pub to_target: Polar,
    pub to_obstacle1: Polar,
    pub to_obstacle2: Polar,
}

pub fn build_observation(
    world: &WorldState,
    agent_id: usize,
    target_offset: Vec2,
    far_distance: f64,
) -> Result<Observation> {
    let me = world
        .agent(agent_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no agent with id {agent_id}")))?;
    if me.role != AgentRole::Follower {
        return Err(Error::InvalidArgument(format!(
            "agent {agent_id} is a {}, observations are built for followers",
            me.role.as_str()
        )));
    }
    let leader = world
        .leader()
        .ok_or_else(|| Error::Config("world has no leader".into()))?;
    let target = target_position(leader.position, target_offset);
    let obstacles = nearest_obstacles(world, agent_id, 2, far_distance)?;
    Ok(Observation {
        to_leader: Polar::of(leader.position - me.position),
        to_target: Polar::of(target - me.position),
        to_obstacle1: Polar::of(obstacles[0]),
        to_obstacle2: Polar::of(obstacles[1]),
    })
}

/// Feature vector `[d_l, θ_l, d_t, θ_t, d_o1, θ_o1, d_o2, θ_o2]`.
///
/// Distances are clipped at `d_max` then scaled to `[0, 1]`; bearings are
/// divided by π.
pub fn normalize_observation(obs: &Observation, d_max: f64) -> Features {
    use std::f64::consts::PI;
    let mut f = [0.0; OBS_DIM];
    let parts = [obs.to_leader, obs.to_target, obs.to_obstacle1, obs.to_obstacle2];
    for (i, p) in parts.iter().enumerate() {
        f[2 * i] = p.distance.min(d_max) / d_max;
        f[2 * i + 1] = p.bearing / PI;
    }
    f
}

/// True when `agent_id` is closer than two robot radii to any other agent.
pub fn detect_collision(world: &WorldState, agent_id: usize, robot_radius: f64) -> bool {
    let Some(me) = world.agent(agent_id) else {
        return false;
    };
    world
        .agents
        .iter()
        .any(|a| a.id != agent_id && a.position.distance(me.position) < 2.0 * robot_radius)
}
