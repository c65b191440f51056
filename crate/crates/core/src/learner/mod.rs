//! Double-DQN training and the small tabular oracles used to validate it.

mod oracle;
mod replay;
mod schedule;
mod tabular;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use oracle::{chain_oracle_check, chain_train_config, ChainEnv, OracleReport};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::{epsilon_at, EpsilonSchedule};
pub use tabular::{chain_mdp, q_learning, tabular_q_update, value_iteration, FiniteMdp, QTable};

use crate::env::Features;
use crate::error::{Error, Result};
use crate::geometry::{ActionIndex, NUM_ACTIONS};
use crate::net::{
    adam_step, argmax, format_f64, AdamState, BatchScratch, ForwardScratch, Gradients, LossKind,
    LossWorkspace, ModelKind, Network, DEFAULT_ARCH,
};

/// Result of advancing an environment by one action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: Features,
    pub reward: f64,
    /// True when the episode ended by environment death (no bootstrapping).
    pub terminal: bool,
    pub collision: bool,
    /// Learner's distance to its formation target after the step, if the task has one.
    pub target_distance: Option<f64>,
}

/// Episodic single-learner task driven by [`train`].
pub trait Environment {
    fn reset(&mut self) -> Result<Features>;

    fn step(&mut self, action: ActionIndex) -> Result<StepOutcome>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    pub max_steps_per_episode: usize,
    pub replay_capacity: usize,
    pub replay_min: usize,
    /// Gradient steps between hard copies of the online net into the target net.
    pub target_sync_period: u64,
    pub episodes: u64,
    pub model_kind: ModelKind,
    /// Reward model name; `None` picks the one matching `model_kind`.
    pub reward: Option<String>,
    pub epsilon: EpsilonSchedule,
    pub loss: LossKind,
    /// Radius for the per-episode time-in-radius statistic.
    pub target_radius: f64,
    pub rng_seed: u64,
    pub stats_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            gamma: 0.99,
            lr: 3e-4,
            max_steps_per_episode: 300,
            replay_capacity: 200_000,
            replay_min: 100_000,
            target_sync_period: 1000,
            episodes: 2000,
            model_kind: ModelKind::Keep,
            reward: None,
            epsilon: EpsilonSchedule::default(),
            loss: LossKind::Mse,
            target_radius: 0.15,
            rng_seed: 0,
            stats_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 || self.batch_size > self.replay_min {
            return fail(format!(
                "batch_size {} must be in 1..=replay_min ({})",
                self.batch_size, self.replay_min
            ));
        }
        if self.replay_min > self.replay_capacity {
            return fail(format!(
                "replay_min {} exceeds replay_capacity {}",
                self.replay_min, self.replay_capacity
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if self.max_steps_per_episode == 0 || self.target_sync_period == 0 {
            return fail("max_steps_per_episode and target_sync_period must be positive".into());
        }
        if !(self.target_radius > 0.0) {
            return fail(format!("target_radius must be positive, got {}", self.target_radius));
        }
        self.epsilon.validate()
    }

    pub fn reward_name(&self) -> &str {
        self.reward
            .as_deref()
            .unwrap_or_else(|| self.model_kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: u64,
    pub ret: f64,
    pub steps: usize,
    /// Steps that ended within `target_radius` of the formation target.
    pub time_in_radius: usize,
    pub collisions: usize,
    pub epsilon: f64,
    /// Post-step target distance for every step of the episode.
    pub distance_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainStats {
    pub episodes: Vec<EpisodeStats>,
    pub env_steps: u64,
    pub gradient_steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub stats: TrainStats,
}

pub const STATS_HEADER: [&str; 6] = [
    "episode",
    "return",
    "steps",
    "time_in_radius",
    "collisions",
    "epsilon",
];

struct StatsSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl StatsSink {
    fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut sink = StatsSink {
            path: path.to_path_buf(),
            writer: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(BufWriter::new(file)),
        };
        sink.write(&STATS_HEADER.map(String::from))?;
        Ok(sink)
    }

    fn write(&mut self, record: &[String]) -> Result<()> {
        self.writer
            .write_record(record)
            .map_err(|e| Error::io(&self.path, e.into()))
    }

    fn episode(&mut self, e: &EpisodeStats) -> Result<()> {
        self.write(&[
            e.episode.to_string(),
            format_f64(e.ret),
            e.steps.to_string(),
            e.time_in_radius.to_string(),
            e.collisions.to_string(),
            format_f64(e.epsilon),
        ])?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Seed-derived independent random stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids carved out of one run seed.
pub mod streams {
    pub const NET_INIT: u64 = 0;
    pub const EXPLORATION: u64 = 1;
    pub const REPLAY: u64 = 2;
    pub const ENVIRONMENT: u64 = 3;
}

/// Epsilon-greedy action: uniform with probability `epsilon`, else greedy
/// with ties to the lowest index.
pub fn select_action(
    net: &Network,
    features: &Features,
    epsilon: f64,
    rng: &mut dyn RngCore,
) -> ActionIndex {
    select_action_with(net, features, epsilon, rng, &mut ForwardScratch::default())
}

fn select_action_with(
    net: &Network,
    features: &Features,
    epsilon: f64,
    rng: &mut dyn RngCore,
    scratch: &mut ForwardScratch,
) -> ActionIndex {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.random::<f64>() < epsilon {
        ActionIndex::new(rng.random_range(0..NUM_ACTIONS)).expect("in range")
    } else {
        net.greedy_action(features, scratch)
    }
}

/// Buffers for batched target computation.
#[derive(Debug, Default)]
struct TargetWorkspace {
    next: Vec<f64>,
    rows: Vec<usize>,
    best: Vec<usize>,
    online: BatchScratch,
    target: BatchScratch,
}

impl TargetWorkspace {
    /// Writes one target per transition into `out`. Next states of terminal
    /// transitions are never copied into the forward batch.
    fn compute<'a>(
        &mut self,
        batch: impl Iterator<Item = &'a Transition>,
        online: &Network,
        target: &Network,
        gamma: f64,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        self.next.clear();
        self.rows.clear();
        for (k, t) in batch.enumerate() {
            out.push(t.reward);
            if !t.terminal {
                self.rows.push(k);
                self.next.extend_from_slice(&t.next_state);
            }
        }
        let n = self.rows.len();
        if n == 0 {
            return;
        }
        let width = online.output_len();
        let q_online = online.forward_batch(&self.next, n, &mut self.online);
        self.best.clear();
        self.best.extend(q_online.chunks_exact(width).map(argmax));
        let q_target = target.forward_batch(&self.next, n, &mut self.target);
        for (i, &k) in self.rows.iter().enumerate() {
            out[k] += gamma * q_target[i * width + self.best[i]];
        }
    }
}

/// Double-DQN regression targets: `r` for terminal transitions, otherwise
/// `r + gamma * Q_target(s')[argmax_a Q_online(s')[a]]`.
pub fn ddqn_targets(
    batch: &[Transition],
    online: &Network,
    target: &Network,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !online.same_arch(target) {
        return Err(Error::Shape(format!(
            "online net {:?} and target net {:?} differ",
            online.arch(),
            target.arch()
        )));
    }
    if online.input_len() != crate::env::OBS_DIM {
        return Err(Error::Shape(format!(
            "network takes {} inputs, transitions carry {}",
            online.input_len(),
            crate::env::OBS_DIM
        )));
    }
    let mut out = Vec::with_capacity(batch.len());
    TargetWorkspace::default().compute(batch.iter(), online, target, gamma, &mut out);
    Ok(out)
}

/// Online/target pair plus optimizer and reusable batch buffers.
struct Learner {
    online: Network,
    target: Network,
    adam: AdamState,
    grads: Gradients,
    loss_ws: LossWorkspace,
    target_ws: TargetWorkspace,
    indices: Vec<usize>,
    states: Vec<f64>,
    actions: Vec<ActionIndex>,
    targets: Vec<f64>,
}

impl Learner {
    fn new(online: Network) -> Self {
        Learner {
            target: online.clone(),
            adam: AdamState::new(&online),
            grads: Gradients::zeros_like(&online),
            online,
            loss_ws: LossWorkspace::default(),
            target_ws: TargetWorkspace::default(),
            indices: Vec::new(),
            states: Vec::new(),
            actions: Vec::new(),
            targets: Vec::new(),
        }
    }

    fn gradient_step(
        &mut self,
        replay: &ReplayBuffer,
        cfg: &TrainConfig,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        replay.sample_indices(cfg.batch_size, rng, &mut self.indices)?;
        let batch = || self.indices.iter().map(|&k| replay.get(k).expect("live index"));
        self.states.clear();
        self.actions.clear();
        for t in batch() {
            self.states.extend_from_slice(&t.state);
            self.actions.push(t.action);
        }
        self.target_ws
            .compute(batch(), &self.online, &self.target, cfg.gamma, &mut self.targets);
        let loss = crate::net::loss_and_gradients_into(
            &self.online,
            &self.states,
            &self.actions,
            &self.targets,
            cfg.loss,
            &mut self.loss_ws,
            &mut self.grads,
        )?;
        adam_step(&mut self.online, &mut self.adam, &self.grads, cfg.lr)?;
        Ok(loss)
    }
}

/// Runs Double-DQN on `env` for `cfg.episodes` episodes and returns the
/// online network with per-episode statistics. Single-threaded; the result
/// depends only on `cfg` and the environment's own seed.
pub fn train(env: &mut dyn Environment, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init_seed = stream_rng(cfg.rng_seed, streams::NET_INIT).random::<u64>();
    let mut learner = Learner::new(Network::new(&DEFAULT_ARCH, init_seed)?);
    let mut explore = stream_rng(cfg.rng_seed, streams::EXPLORATION);
    let mut sampler = stream_rng(cfg.rng_seed, streams::REPLAY);
    let mut replay = ReplayBuffer::new(cfg.replay_capacity);
    let mut sink = cfg.stats_path.as_deref().map(StatsSink::create).transpose()?;
    let mut stats = TrainStats::default();
    let mut scratch = ForwardScratch::default();
    let warmup = cfg.replay_min.max(cfg.batch_size);

    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon.epsilon_at(episode);
        let mut state = env.reset()?;
        let mut ep = EpisodeStats {
            episode,
            ret: 0.0,
            steps: 0,
            time_in_radius: 0,
            collisions: 0,
            epsilon,
            distance_errors: Vec::new(),
        };
        for _ in 0..cfg.max_steps_per_episode {
            let action =
                select_action_with(&learner.online, &state, epsilon, &mut explore, &mut scratch);
            let out = env.step(action)?;
            replay.push(Transition {
                state,
                action,
                reward: out.reward,
                next_state: out.next_state,
                terminal: out.terminal,
            });
            ep.ret += out.reward;
            ep.steps += 1;
            ep.collisions += usize::from(out.collision);
            if let Some(d) = out.target_distance {
                ep.distance_errors.push(d);
                ep.time_in_radius += usize::from(d <= cfg.target_radius);
            }
            stats.env_steps += 1;
            if replay.len() >= warmup {
                learner.gradient_step(&replay, cfg, &mut sampler)?;
                stats.gradient_steps += 1;
                if stats.gradient_steps % cfg.target_sync_period == 0 {
                    learner.target.copy_from(&learner.online);
                }
            }
            state = out.next_state;
            if out.terminal {
                break;
            }
        }
        if let Some(sink) = sink.as_mut() {
            sink.episode(&ep)?;
        }
        stats.episodes.push(ep);
    }
    Ok(TrainOutcome {
        network: learner.online,
        stats,
    })
}

/// Parses a stats CSV written during training (distance series are not stored).
pub fn read_stats_csv(path: &Path) -> Result<Vec<EpisodeStats>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let ctx = path.display().to_string();
    let header = reader
        .headers()
        .map_err(|e| Error::parse(&ctx, e.to_string()))?
        .clone();
    if header.iter().ne(STATS_HEADER) {
        return Err(Error::parse(&ctx, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(&ctx, e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::parse(&ctx, format!("row {}: bad {}", line + 1, STATS_HEADER[i]));
        out.push(EpisodeStats {
            episode: field(0).parse().map_err(|_| bad(0))?,
            ret: field(1).parse().map_err(|_| bad(1))?,
            steps: field(2).parse().map_err(|_| bad(2))?,
            time_in_radius: field(3).parse().map_err(|_| bad(3))?,
            collisions: field(4).parse().map_err(|_| bad(4))?,
            epsilon: field(5).parse().map_err(|_| bad(5))?,
            distance_errors: Vec::new(),
        });
    }
    Ok(out)
}
