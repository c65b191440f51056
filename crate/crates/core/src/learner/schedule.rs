use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponentially decaying exploration rate, applied once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            decay: 0.9975,
            floor: 0.05,
        }
    }
}

impl EpsilonSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.floor)
            && self.floor <= self.start
            && self.start <= 1.0
            && self.decay > 0.0
            && self.decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid epsilon schedule {self:?}")))
        }
    }

    /// `max(floor, start * decay^episode)`.
    pub fn epsilon_at(&self, episode: u64) -> f64 {
        let e = episode.min(i32::MAX as u64) as i32;
        (self.start * self.decay.powi(e)).max(self.floor)
    }
}

pub fn epsilon_at(schedule: &EpsilonSchedule, episode: u64) -> f64 {
    schedule.epsilon_at(episode)
}
