//! Scenario runner, metrics and trace files.

mod compare;
mod scenario;
mod trace;

use std::fmt::Write as _;
use std::path::Path;

pub use compare::{compare_rewards, ArmResult, CompareReport};
pub use scenario::{
    builtin_scenarios, find_scenario, run_scenario, EvalContext, FollowerSpec, Scenario,
    ScenarioRun,
};
pub use trace::{export_trace, import_trace, Trace, TraceRecord, TRACE_HEADER};

use crate::env::AgentRole;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::learner::EpisodeStats;
use crate::net::format_f64;

/// Recorded distance-to-slot series of one follower, one value per step.
pub fn distance_error(trace: &Trace, follower_id: usize) -> Result<Vec<f64>> {
    let rows: Vec<_> = trace.records_of(follower_id).collect();
    match rows.first() {
        Some(r) if r.role == AgentRole::Follower => {}
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no follower with id {follower_id} in trace"
            )))
        }
    }
    rows.iter()
        .map(|r| {
            r.dist_err.ok_or_else(|| {
                Error::InvalidArgument(format!("step {} of follower {follower_id} lacks dist_err", r.step))
            })
        })
        .collect()
}

/// Distance-to-slot series recomputed from positions: the follower against
/// the leader shifted by `offset`.
pub fn distance_error_from_positions(trace: &Trace, follower_id: usize, offset: Vec2) -> Result<Vec<f64>> {
    let n = trace.agent_ids().len();
    let mut out = Vec::new();
    for step in trace.records.chunks(n.max(1)) {
        let leader = step
            .iter()
            .find(|r| r.role == AgentRole::Leader)
            .ok_or_else(|| Error::InvalidArgument("trace has no leader".into()))?;
        let me = step
            .iter()
            .find(|r| r.agent_id == follower_id && r.role == AgentRole::Follower)
            .ok_or_else(|| Error::InvalidArgument(format!("no follower with id {follower_id} in trace")))?;
        let target = crate::env::target_position(Vec2::new(leader.x, leader.y), offset);
        out.push(target.distance(Vec2::new(me.x, me.y)));
    }
    Ok(out)
}

/// Steps at which any two agents were closer than two robot radii.
pub fn collision_steps(trace: &Trace, robot_radius: f64) -> usize {
    let n = trace.agent_ids().len();
    trace
        .records
        .chunks(n.max(1))
        .skip(1)
        .filter(|step| {
            step.iter().enumerate().any(|(i, a)| {
                step[i + 1..]
                    .iter()
                    .any(|b| Vec2::new(a.x, a.y).distance(Vec2::new(b.x, b.y)) < 2.0 * robot_radius)
            })
        })
        .count()
}

/// Per window of `window` episodes, the number of steps that ended within
/// `radius` of the formation slot.
pub fn time_in_radius(stats: &[EpisodeStats], radius: f64, window: usize) -> Result<Vec<usize>> {
    if !(radius > 0.0) || window == 0 {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} and window {window} must be positive"
        )));
    }
    Ok(stats
        .chunks(window)
        .map(|w| {
            w.iter()
                .map(|e| e.distance_errors.iter().filter(|&&d| d <= radius).count())
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowerMetrics {
    pub agent_id: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub followers: Vec<FollowerMetrics>,
    pub collision_steps: usize,
    pub time_in_radius: Vec<usize>,
    pub returns: Vec<f64>,
}

impl Metrics {
    /// Error statistics over the steps from `from_step` on.
    pub fn from_trace(trace: &Trace, robot_radius: f64, from_step: usize) -> Result<Self> {
        let mut followers = Vec::new();
        for id in trace.agent_ids() {
            let is_follower = trace.records_of(id).next().is_some_and(|r| r.role == AgentRole::Follower);
            if !is_follower {
                continue;
            }
            let series = distance_error(trace, id)?;
            let tail = series.get(from_step..).filter(|t| !t.is_empty()).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "trace has {} steps, window starts at {from_step}",
                    series.len()
                ))
            })?;
            followers.push(FollowerMetrics {
                agent_id: id,
                mean_error: tail.iter().sum::<f64>() / tail.len() as f64,
                max_error: tail.iter().copied().fold(0.0, f64::max),
                final_error: *tail.last().unwrap(),
            });
        }
        Ok(Metrics {
            followers,
            collision_steps: collision_steps(trace, robot_radius),
            ..Metrics::default()
        })
    }

    pub fn from_training(stats: &[EpisodeStats], radius: f64, window: usize) -> Result<Self> {
        Ok(Metrics {
            time_in_radius: time_in_radius(stats, radius, window)?,
            returns: stats.iter().map(|e| e.ret).collect(),
            ..Metrics::default()
        })
    }

    /// `metric,index,value` rows; the index is the follower id or window/episode number.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,index,value\n");
        let mut row = |m: &str, i: String, v: String| {
            writeln!(out, "{m},{i},{v}").expect("string write");
        };
        row("collision_steps", String::new(), self.collision_steps.to_string());
        for f in &self.followers {
            row("mean_error", f.agent_id.to_string(), format_f64(f.mean_error));
            row("max_error", f.agent_id.to_string(), format_f64(f.max_error));
            row("final_error", f.agent_id.to_string(), format_f64(f.final_error));
        }
        for (k, c) in self.time_in_radius.iter().enumerate() {
            row("time_in_radius", k.to_string(), c.to_string());
        }
        for (k, r) in self.returns.iter().enumerate() {
            row("return", k.to_string(), format_f64(*r));
        }
        out
    }
}

pub fn export_metrics(metrics: &Metrics, path: &Path) -> Result<()> {
    trace::write_file(path, &metrics.to_csv())
}
