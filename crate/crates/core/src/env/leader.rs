//! Leader motion controllers.
//!
//! Every controller drives the leader at a constant speed. Closed paths
//! (circle, square) are tracked by steering straight at the current waypoint
//! and advancing once the leader is inside the waypoint tolerance.

use std::f64::consts::TAU;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Trajectory pattern for the leader, selected by `kind` in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LeaderMode {
    Circle { center: Vec2, radius: f64 },
    Square { center: Vec2, side: f64 },
    RandomWalk { redirect_period: f64 },
    Static {},
}

impl LeaderMode {
    pub fn name(&self) -> &'static str {
        match self {
            LeaderMode::Circle { .. } => "circle",
            LeaderMode::Square { .. } => "square",
            LeaderMode::RandomWalk { .. } => "random-walk",
            LeaderMode::Static {} => "static",
        }
    }

    /// Closed waypoint loop for path modes, counter-clockwise.
    pub fn waypoints(&self, circle_waypoints: usize) -> Option<Vec<Vec2>> {
        match *self {
            LeaderMode::Circle { center, radius } => Some(
                (0..circle_waypoints)
                    .map(|k| {
                        let a = TAU * k as f64 / circle_waypoints as f64;
                        center + Vec2::from_polar(radius, a)
                    })
                    .collect(),
            ),
            LeaderMode::Square { center, side } => {
                let h = side / 2.0;
                Some(vec![
                    center + Vec2::new(h, -h),
                    center + Vec2::new(h, h),
                    center + Vec2::new(-h, h),
                    center + Vec2::new(-h, -h),
                ])
            }
            LeaderMode::RandomWalk { .. } | LeaderMode::Static {} => None,
        }
    }

    /// Checks that path parameters are positive and the path fits inside the arena.
    pub fn validate(&self, arena_half_extent: f64) -> Result<()> {
        let fits = |center: Vec2, reach: f64| {
            center.x.abs() + reach <= arena_half_extent && center.y.abs() + reach <= arena_half_extent
        };
        match *self {
            LeaderMode::Circle { center, radius } => {
                if !(radius > 0.0) || !fits(center, radius) {
                    return Err(Error::Config(format!(
                        "circle radius {radius} around {center} does not fit the arena"
                    )));
                }
            }
            LeaderMode::Square { center, side } => {
                if !(side > 0.0) || !fits(center, side / 2.0) {
                    return Err(Error::Config(format!(
                        "square side {side} around {center} does not fit the arena"
                    )));
                }
            }
            LeaderMode::RandomWalk { redirect_period } => {
                if !(redirect_period > 0.0) {
                    return Err(Error::Config(format!(
                        "random-walk redirect period must be positive, got {redirect_period}"
                    )));
                }
            }
            LeaderMode::Static {} => {}
        }
        Ok(())
    }

    pub fn controller(
        &self,
        speed: f64,
        circle_waypoints: usize,
        tolerance: f64,
    ) -> Box<dyn LeaderController> {
        match *self {
            LeaderMode::Static {} => Box::new(StaticLeader),
            LeaderMode::RandomWalk { redirect_period } => {
                Box::new(RandomWalkLeader::new(speed, redirect_period))
            }
            LeaderMode::Circle { .. } | LeaderMode::Square { .. } => {
                let waypoints = self.waypoints(circle_waypoints).expect("path mode");
                Box::new(WaypointLeader::new(waypoints, speed, tolerance))
            }
        }
    }
}

/// Produces the leader's velocity command each step.
pub trait LeaderController: Send {
    fn name(&self) -> &'static str;

    fn command(&mut self, position: Vec2, time: f64, rng: &mut dyn RngCore) -> Vec2;
}

/// Convenience wrapper matching the controller call used by the simulator loops.
pub fn leader_command(
    controller: &mut dyn LeaderController,
    position: Vec2,
    time: f64,
    rng: &mut dyn RngCore,
) -> Vec2 {
    controller.command(position, time, rng)
}

#[derive(Debug, Clone, Default)]
pub struct StaticLeader;

impl LeaderController for StaticLeader {
    fn name(&self) -> &'static str {
        "static"
    }

    fn command(&mut self, _: Vec2, _: f64, _: &mut dyn RngCore) -> Vec2 {
        Vec2::ZERO
    }
}

#[derive(Debug, Clone)]
pub struct WaypointLeader {
    waypoints: Vec<Vec2>,
    speed: f64,
    tolerance: f64,
    current: Option<usize>,
}

impl WaypointLeader {
    pub fn new(waypoints: Vec<Vec2>, speed: f64, tolerance: f64) -> Self {
        assert!(!waypoints.is_empty(), "waypoint loop must not be empty");
        WaypointLeader {
            waypoints,
            speed,
            tolerance,
            current: None,
        }
    }

    pub fn current_waypoint(&self) -> Option<Vec2> {
        self.current.map(|i| self.waypoints[i])
    }

    /// End vertex of the loop segment closest to `p`, so that a leader
    /// starting anywhere on the path keeps moving forward along it.
    fn entry_index(&self, p: Vec2) -> usize {
        let n = self.waypoints.len();
        let mut best = (f64::INFINITY, 0);
        for i in 0..n {
            let a = self.waypoints[i];
            let b = self.waypoints[(i + 1) % n];
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = if len2 > 0.0 {
                ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = p.distance(a + ab * t);
            if d < best.0 {
                best = (d, (i + 1) % n);
            }
        }
        best.1
    }
}

impl LeaderController for WaypointLeader {
    fn name(&self) -> &'static str {
        "waypoint"
    }

    fn command(&mut self, position: Vec2, _: f64, _: &mut dyn RngCore) -> Vec2 {
        let n = self.waypoints.len();
        let mut idx = match self.current {
            Some(i) => i,
            None => self.entry_index(position),
        };
        for _ in 0..n {
            if position.distance(self.waypoints[idx]) < self.tolerance {
                idx = (idx + 1) % n;
            } else {
                break;
            }
        }
        self.current = Some(idx);
        match (self.waypoints[idx] - position).normalized() {
            Some(dir) => dir * self.speed,
            None => Vec2::ZERO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomWalkLeader {
    speed: f64,
    period: f64,
    heading: Vec2,
    next_redirect: f64,
}

impl RandomWalkLeader {
    pub fn new(speed: f64, period: f64) -> Self {
        RandomWalkLeader {
            speed,
            period,
            heading: Vec2::ZERO,
            next_redirect: 0.0,
        }
    }
}

impl LeaderController for RandomWalkLeader {
    fn name(&self) -> &'static str {
        "random-walk"
    }

    fn command(&mut self, _: Vec2, time: f64, rng: &mut dyn RngCore) -> Vec2 {
        // 1e-9 absorbs the drift of time = steps * dt against summed periods
        if time + 1e-9 >= self.next_redirect {
            let angle = rng.random_range(0.0..TAU);
            self.heading = Vec2::from_polar(1.0, angle);
            while self.next_redirect <= time + 1e-9 {
                self.next_redirect += self.period;
            }
        }
        self.heading * self.speed
    }
}
