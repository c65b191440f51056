//! Single-learner training world: leader, learning follower and stationary obstacles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    build_observation, detect_collision, normalize_observation, step_world, target_position,
    AgentRole, AgentState, Features, LeaderController, LeaderMode, Observation, Polar, WorldConfig,
    WorldState,
};
use crate::error::{Error, Result};
use crate::geometry::{ActionIndex, Vec2};
use crate::learner::{Environment, StepOutcome};
use crate::net::ModelKind;
use crate::policy::follower_velocity;
use crate::reward::{RewardContext, RewardModel};

pub const LEADER_ID: usize = 0;
pub const LEARNER_ID: usize = 1;

const MAX_PLACEMENT_TRIES: usize = 100_000;

/// Episode layout for one training task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    /// One mode is drawn uniformly per episode.
    pub leader_modes: Vec<LeaderMode>,
    /// Start the learner on its formation slot instead of at a random spot.
    pub follower_at_target: bool,
    pub obstacles: usize,
    /// Redraw obstacle positions every episode; otherwise place them once.
    pub randomize_obstacles: bool,
    /// Random placements are uniform in `[-h, h]^2`.
    pub spawn_half_extent: f64,
    /// Range of the formation offset length; its direction is uniform.
    pub offset_range: [f64; 2],
    /// Minimum initial distance between agents, in robot radii.
    pub min_separation_radii: f64,
}

impl TaskConfig {
    pub fn reach() -> Self {
        TaskConfig {
            leader_modes: vec![LeaderMode::RandomWalk {
                redirect_period: 2.0,
            }],
            follower_at_target: false,
            obstacles: 2,
            randomize_obstacles: true,
            spawn_half_extent: 2.5,
            offset_range: [0.3, 0.7],
            min_separation_radii: 4.0,
        }
    }

    pub fn keep() -> Self {
        TaskConfig {
            leader_modes: vec![
                LeaderMode::Circle {
                    center: Vec2::ZERO,
                    radius: 0.8,
                },
                LeaderMode::Circle {
                    center: Vec2::ZERO,
                    radius: 1.2,
                },
                LeaderMode::Square {
                    center: Vec2::ZERO,
                    side: 1.2,
                },
                LeaderMode::Square {
                    center: Vec2::ZERO,
                    side: 1.8,
                },
            ],
            follower_at_target: true,
            ..Self::reach()
        }
    }

    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Reach => Self::reach(),
            ModelKind::Keep => Self::keep(),
        }
    }

    pub fn validate(&self, world: &WorldConfig) -> Result<()> {
        if self.leader_modes.is_empty() {
            return Err(Error::Config("task needs at least one leader mode".into()));
        }
        for m in &self.leader_modes {
            m.validate(world.arena_half_extent)?;
        }
        let [lo, hi] = self.offset_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("bad offset range {:?}", self.offset_range)));
        }
        if !(self.spawn_half_extent > 0.0 && self.spawn_half_extent <= world.arena_half_extent) {
            return Err(Error::Config(format!(
                "spawn_half_extent {} must be in (0, arena_half_extent]",
                self.spawn_half_extent
            )));
        }
        if !(self.min_separation_radii >= 2.0) {
            return Err(Error::Config(
                "min_separation_radii below 2 would spawn agents in collision".into(),
            ));
        }
        Ok(())
    }
}

/// Training environment for one learning follower.
///
/// Agent 0 is the leader, agent 1 the learner, the rest stationary
/// obstacles. Every other agent counts as an obstacle for the reward.
pub struct FormationEnv {
    world_cfg: WorldConfig,
    task: TaskConfig,
    reward: Box<dyn RewardModel>,
    rng: ChaCha8Rng,
    world: WorldState,
    leader: Box<dyn LeaderController>,
    offset: Vec2,
    fixed_obstacles: Option<Vec<Vec2>>,
    obs: Observation,
}

impl FormationEnv {
    pub fn new(
        world_cfg: WorldConfig,
        task: TaskConfig,
        reward: Box<dyn RewardModel>,
        seed: u64,
    ) -> Result<Self> {
        world_cfg.validate()?;
        task.validate(&world_cfg)?;
        let leader = world_cfg.leader_controller(&LeaderMode::Static {});
        let world = WorldState::new(vec![AgentState::new(LEADER_ID, AgentRole::Leader, Vec2::ZERO)])?;
        Ok(FormationEnv {
            world_cfg,
            task,
            reward,
            rng: ChaCha8Rng::seed_from_u64(seed),
            world,
            leader,
            offset: Vec2::ZERO,
            fixed_obstacles: None,
            obs: Observation::default(),
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn reward_name(&self) -> &'static str {
        self.reward.name()
    }

    fn uniform_point(&mut self) -> Vec2 {
        let h = self.task.spawn_half_extent;
        Vec2::new(self.rng.random_range(-h..=h), self.rng.random_range(-h..=h))
    }

    fn place_apart(&mut self, taken: &[Vec2]) -> Result<Vec2> {
        let min_sep = self.task.min_separation_radii * self.world_cfg.robot_radius;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let p = self.uniform_point();
            if taken.iter().all(|q| q.distance(p) >= min_sep) {
                return Ok(p);
            }
        }
        Err(Error::Config(format!(
            "could not place an agent {min_sep} m from {} others",
            taken.len()
        )))
    }

    /// Uniform point along a closed waypoint loop.
    fn point_on_loop(&mut self, waypoints: &[Vec2]) -> Vec2 {
        let k = self.rng.random_range(0..waypoints.len());
        let t: f64 = self.rng.random();
        let a = waypoints[k];
        let b = waypoints[(k + 1) % waypoints.len()];
        a + (b - a) * t
    }

    fn observe(&self) -> Result<Observation> {
        build_observation(&self.world, LEARNER_ID, self.offset, self.world_cfg.far_distance)
    }

    fn features(&self) -> Features {
        normalize_observation(&self.obs, self.world_cfg.d_max)
    }
}

impl Environment for FormationEnv {
    fn reset(&mut self) -> Result<Features> {
        let mode_idx = self.rng.random_range(0..self.task.leader_modes.len());
        let mode = self.task.leader_modes[mode_idx].clone();
        self.leader = self.world_cfg.leader_controller(&mode);

        let leader_pos = match mode.waypoints(self.world_cfg.circle_waypoints) {
            Some(wp) => self.point_on_loop(&wp),
            None => self.uniform_point(),
        };
        let [lo, hi] = self.task.offset_range;
        let len = if hi > lo { self.rng.random_range(lo..=hi) } else { lo };
        let angle = self.rng.random_range(0.0..std::f64::consts::TAU);
        self.offset = Vec2::from_polar(len, angle);

        let learner_pos = if self.task.follower_at_target {
            target_position(leader_pos, self.offset).clamp_box(self.world_cfg.arena_half_extent)
        } else {
            self.place_apart(&[leader_pos])?
        };
        let mut taken = vec![leader_pos, learner_pos];
        let obstacles = match (&self.fixed_obstacles, self.task.randomize_obstacles) {
            (Some(fixed), false) => fixed.clone(),
            _ => {
                let mut placed = Vec::with_capacity(self.task.obstacles);
                for _ in 0..self.task.obstacles {
                    let p = self.place_apart(&taken)?;
                    taken.push(p);
                    placed.push(p);
                }
                if !self.task.randomize_obstacles {
                    self.fixed_obstacles = Some(placed.clone());
                }
                placed
            }
        };

        let mut agents = vec![
            AgentState::new(LEADER_ID, AgentRole::Leader, leader_pos),
            AgentState::new(LEARNER_ID, AgentRole::Follower, learner_pos),
        ];
        for (k, p) in obstacles.into_iter().enumerate() {
            agents.push(AgentState::new(LEARNER_ID + 1 + k, AgentRole::Obstacle, p));
        }
        self.world = WorldState::new(agents)?;
        self.obs = self.observe()?;
        Ok(self.features())
    }

    fn step(&mut self, action: ActionIndex) -> Result<StepOutcome> {
        let me = self.world.agents[LEARNER_ID].position;
        let others: Vec<Polar> = self
            .world
            .agents
            .iter()
            .filter(|a| a.id != LEARNER_ID)
            .map(|a| Polar::of(a.position - me))
            .collect();
        let leader_pos = self.world.agents[LEADER_ID].position;
        let leader_cmd = self.leader.command(leader_pos, self.world.time, &mut self.rng);
        let commands = BTreeMap::from([
            (LEADER_ID, leader_cmd),
            (LEARNER_ID, follower_velocity(action, self.world_cfg.follower_speed)),
        ]);
        self.world = step_world(&self.world, &commands, &self.world_cfg)?;
        let before = self.obs;
        self.obs = self.observe()?;
        let reward = self
            .reward
            .evaluate(&RewardContext {
                to_target: before.to_target,
                obstacles: &others,
                action,
            })
            .total;
        let collision = detect_collision(&self.world, LEARNER_ID, self.world_cfg.robot_radius);
        Ok(StepOutcome {
            next_state: self.features(),
            reward,
            terminal: collision,
            collision,
            target_distance: Some(self.obs.to_target.distance),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::{reward_registry, RewardConfig};

    fn env(task: TaskConfig, reward: &str, seed: u64) -> FormationEnv {
        let r = reward_registry().build(reward, &RewardConfig::default()).unwrap();
        FormationEnv::new(WorldConfig::default(), task, r, seed).unwrap()
    }

    #[test]
    fn reset_layout_respects_separation() {
        let mut e = env(TaskConfig::reach(), "reach", 3);
        for _ in 0..200 {
            e.reset().unwrap();
            let w = e.world();
            assert_eq!(w.agents.len(), 4);
            assert!(w.min_separation() >= 4.0 * 0.037 - 1e-12);
            assert!(w.agents.iter().all(|a| a.position.x.abs() <= 2.5 && a.position.y.abs() <= 2.5));
            let len = e.offset().norm();
            assert!((0.3 - 1e-12..=0.7 + 1e-12).contains(&len));
        }
    }

    #[test]
    fn keep_task_starts_on_target() {
        let mut e = env(TaskConfig::keep(), "keep", 4);
        for _ in 0..50 {
            let f = e.reset().unwrap();
            assert!(e.observation().to_target.distance < 1e-12);
            assert_eq!(f[2], 0.0);
        }
    }

    #[test]
    fn fixed_obstacles_stay_put() {
        let task = TaskConfig {
            randomize_obstacles: false,
            ..TaskConfig::reach()
        };
        let mut e = env(task, "reach", 5);
        e.reset().unwrap();
        let first: Vec<Vec2> = e.world().agents[2..].iter().map(|a| a.position).collect();
        for _ in 0..20 {
            e.reset().unwrap();
            let now: Vec<Vec2> = e.world().agents[2..].iter().map(|a| a.position).collect();
            assert_eq!(now, first);
        }
    }

    #[test]
    fn step_moves_learner_and_scores_pre_step_heading() {
        let mut e = env(TaskConfig::keep(), "keep", 6);
        e.reset().unwrap();
        // step once so the learner is off target, then head at the target
        e.step(ActionIndex::new(0).unwrap()).unwrap();
        let before = *e.observation();
        let best = ActionIndex::all()
            .min_by(|a, b| {
                let da = crate::geometry::angular_difference(a.angle(), before.to_target.bearing);
                let db = crate::geometry::angular_difference(b.angle(), before.to_target.bearing);
                da.total_cmp(&db)
            })
            .unwrap();
        let p0 = e.world().agents[LEARNER_ID].position;
        let out = e.step(best).unwrap();
        let p1 = e.world().agents[LEARNER_ID].position;
        assert!((p1.distance(p0) - 0.036).abs() < 1e-12);
        let expected = crate::reward::keep_reward(before.to_target, best, &RewardConfig::default());
        assert_eq!(out.reward, expected);
        assert!(out.reward > 0.0);
        assert_eq!(out.target_distance, Some(e.observation().to_target.distance));
    }

    #[test]
    fn collision_terminates() {
        let mut e = env(TaskConfig::reach(), "reach", 7);
        e.reset().unwrap();
        // put an obstacle right next to the learner along heading 0
        let me = e.world.agents[LEARNER_ID].position;
        let mut w = e.world.clone();
        w.agents[2].position = (me + Vec2::new(0.08, 0.0)).clamp_box(2.5);
        w.agents[LEARNER_ID].position = w.agents[2].position - Vec2::new(0.08, 0.0);
        e.world = w;
        e.obs = e.observe().unwrap();
        let out = e.step(ActionIndex::new(0).unwrap()).unwrap();
        assert!(out.collision && out.terminal);
    }

    #[test]
    fn episodes_replay_under_seed() {
        let run = |seed| {
            let mut e = env(TaskConfig::reach(), "reach", seed);
            let mut trace = Vec::new();
            for ep in 0..3 {
                trace.push(e.reset().unwrap());
                for k in 0..50 {
                    let out = e.step(ActionIndex::new((k + ep) % 8).unwrap()).unwrap();
                    trace.push(out.next_state);
                }
            }
            trace
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn validation() {
        let w = WorldConfig::default();
        let mut t = TaskConfig::reach();
        t.leader_modes.clear();
        assert!(t.validate(&w).is_err());
        let t = TaskConfig {
            offset_range: [0.7, 0.3],
            ..TaskConfig::reach()
        };
        assert!(t.validate(&w).is_err());
        assert!(TaskConfig::keep().validate(&w).is_ok());
    }
}
