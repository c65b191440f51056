//! Chain-MDP check of the full training pipeline against value iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{chain_mdp, q_learning, train, value_iteration, Environment, FiniteMdp, QTable, StepOutcome};
use super::{EpsilonSchedule, TrainConfig};
use crate::env::{Features, OBS_DIM};
use crate::error::Result;
use crate::geometry::{ActionIndex, NUM_ACTIONS};
use crate::net::{ForwardScratch, Network};

/// The chain MDP exposed as an [`Environment`] with one-hot features padded
/// to the network's input width.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    mdp: FiniteMdp,
    state: usize,
}

impl ChainEnv {
    pub fn new() -> Self {
        ChainEnv {
            mdp: chain_mdp(NUM_ACTIONS),
            state: 0,
        }
    }

    pub fn features(state: usize) -> Features {
        let mut f = [0.0; OBS_DIM];
        f[state] = 1.0;
        f
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }
}

impl Default for ChainEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for ChainEnv {
    fn reset(&mut self) -> Result<Features> {
        self.state = self.mdp.start;
        Ok(Self::features(self.state))
    }

    fn step(&mut self, action: ActionIndex) -> Result<StepOutcome> {
        // deterministic transitions: the single listed outcome
        let (next, _, reward) = self.mdp.outcomes(self.state, action.index())[0];
        self.state = next;
        Ok(StepOutcome {
            next_state: Self::features(next),
            reward,
            terminal: self.mdp.terminal[next],
            collision: false,
            target_distance: None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub oracle: QTable,
    pub tabular: QTable,
    pub tabular_error: f64,
    /// Network Q-values on the non-terminal chain states.
    pub learned: QTable,
    pub learned_error: f64,
    pub greedy_matches: bool,
}

impl OracleReport {
    pub fn passed(&self, tabular_tol: f64, learned_tol: f64) -> bool {
        self.tabular_error < tabular_tol && self.learned_error < learned_tol && self.greedy_matches
    }
}

/// Small-scale training settings for the chain.
pub fn chain_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 32,
        gamma: 0.99,
        lr: 1e-3,
        max_steps_per_episode: 20,
        replay_capacity: 10_000,
        replay_min: 500,
        target_sync_period: 200,
        episodes: 600,
        epsilon: EpsilonSchedule {
            start: 1.0,
            decay: 0.99,
            floor: 0.2,
        },
        rng_seed: seed,
        ..TrainConfig::default()
    }
}

/// Runs tabular Q-learning and DDQN on the chain and compares both with
/// value iteration.
pub fn chain_oracle_check(seed: u64) -> Result<OracleReport> {
    let gamma = 0.99;
    let tab_mdp = chain_mdp(2);
    let oracle2 = value_iteration(&tab_mdp, gamma, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tabular = q_learning(&tab_mdp, 10_000, 0.2, gamma, 50, &mut rng);
    let tabular_error = tabular.max_abs_diff(&oracle2);

    let mut env = ChainEnv::new();
    let oracle = value_iteration(env.mdp(), gamma, 1e-12)?;
    let outcome = train(&mut env, &chain_train_config(seed))?;
    let learned = network_table(&outcome.network, &env);
    let mut learned_error = 0.0f64;
    let mut greedy_matches = true;
    for s in (0..env.mdp.n_states).filter(|&s| !env.mdp.terminal[s]) {
        for a in 0..NUM_ACTIONS {
            learned_error = learned_error.max((learned.get(s, a) - oracle.get(s, a)).abs());
        }
        greedy_matches &= learned.greedy(s) == oracle.greedy(s);
    }
    Ok(OracleReport {
        oracle,
        tabular,
        tabular_error,
        learned,
        learned_error,
        greedy_matches,
    })
}

fn network_table(net: &Network, env: &ChainEnv) -> QTable {
    let mdp = env.mdp();
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut scratch = ForwardScratch::default();
    for s in (0..mdp.n_states).filter(|&s| !mdp.terminal[s]) {
        let values = net.forward_with(&ChainEnv::features(s), &mut scratch);
        for (a, &v) in values.iter().enumerate() {
            q.set(s, a, v);
        }
    }
    q
}
