use std::fmt::Write as _;
use std::path::Path;

use super::time_in_radius;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::learner::TrainOutcome;
use crate::net::ModelKind;

/// One trained keep model of the comparison.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub reward: String,
    pub seed: u64,
    /// Steps within the comparison radius per window of episodes.
    pub series: Vec<usize>,
    pub outcome: TrainOutcome,
}

impl ArmResult {
    pub fn final_window(&self) -> usize {
        self.series.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub arms: Vec<ArmResult>,
}

impl CompareReport {
    pub fn arm(&self, reward: &str, seed: u64) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.reward == reward && a.seed == seed)
    }

    /// `arm,seed,window,count` rows.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("arm,seed,window,count\n");
        for a in &self.arms {
            for (k, c) in a.series.iter().enumerate() {
                writeln!(out, "{},{},{k},{c}", a.reward, a.seed).expect("string write");
            }
        }
        out
    }

    pub fn write_series(&self, path: &Path) -> Result<()> {
        super::trace::write_file(path, &self.series_csv())
    }
}

/// Trains one keep model per (seed, reward arm) with otherwise identical
/// settings and reports each arm's time-in-radius series. When `stats_dir`
/// is given, each run streams its stats CSV there as `<arm>_seed<N>.csv`.
pub fn compare_rewards(cfg: &ExperimentConfig, stats_dir: Option<&Path>) -> Result<CompareReport> {
    cfg.validate()?;
    if cfg.compare.arms.is_empty() || cfg.compare.seeds.is_empty() {
        return Err(Error::Config("comparison needs at least one arm and one seed".into()));
    }
    let mut arms = Vec::new();
    for &seed in &cfg.compare.seeds {
        for reward in &cfg.compare.arms {
            let mut train = cfg.train_config(ModelKind::Keep, seed, Some(reward));
            train.target_radius = cfg.compare.radius;
            train.stats_path = stats_dir.map(|d| d.join(format!("{reward}_seed{seed}.csv")));
            let outcome = cfg.train_model(&train)?;
            let series = time_in_radius(&outcome.stats.episodes, cfg.compare.radius, cfg.compare.window)?;
            arms.push(ArmResult {
                reward: reward.clone(),
                seed,
                series,
                outcome,
            });
        }
    }
    Ok(CompareReport { arms })
}
