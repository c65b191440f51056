use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::net::argmax;

/// Dense state-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One-step Q-learning backup:
/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn tabular_q_update(
    q: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
) {
    let old = q.get(s, a);
    let target = r + gamma * q.max(s_next);
    q.set(s, a, old + alpha * (target - old));
}

/// Finite MDP with explicit outcome lists. Terminal states have value zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `outcomes[s * n_actions + a]` lists `(next_state, probability, reward)`.
    pub outcomes: Vec<Vec<(usize, f64, f64)>>,
    pub terminal: Vec<bool>,
    pub start: usize,
}

impl FiniteMdp {
    pub fn outcomes(&self, s: usize, a: usize) -> &[(usize, f64, f64)] {
        &self.outcomes[s * self.n_actions + a]
    }

    /// Draws one outcome of `(s, a)`.
    pub fn sample(&self, s: usize, a: usize, rng: &mut dyn RngCore) -> (usize, f64) {
        let outs = self.outcomes(s, a);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(next, p, r) in outs {
            acc += p;
            if u < acc {
                return (next, r);
            }
        }
        let &(next, _, r) = outs.last().expect("every state-action has an outcome");
        (next, r)
    }
}

/// Three-state corridor `s0 - s1 - goal`. Action 0 moves right; every other
/// action moves left (staying put at s0). Entering the goal pays 1 and ends
/// the episode.
pub fn chain_mdp(n_actions: usize) -> FiniteMdp {
    assert!(n_actions >= 2, "chain needs a right and a left action");
    let goal = 2;
    let mut outcomes = Vec::with_capacity(3 * n_actions);
    for s in 0..3usize {
        for a in 0..n_actions {
            let next = if s == goal {
                goal
            } else if a == 0 {
                s + 1
            } else {
                s.saturating_sub(1)
            };
            let reward = if s != goal && next == goal { 1.0 } else { 0.0 };
            outcomes.push(vec![(next, 1.0, reward)]);
        }
    }
    FiniteMdp {
        n_states: 3,
        n_actions,
        outcomes,
        terminal: vec![false, false, true],
        start: 0,
    }
}

const MAX_SWEEPS: usize = 1_000_000;

/// Bellman optimality sweeps until the largest change is below `tolerance`.
///
/// `gamma` above 1 is rejected. With `gamma == 1` the iteration must still
/// settle (every policy eventually terminates); otherwise the MDP is
/// reported as non-terminating.
pub fn value_iteration(mdp: &FiniteMdp, gamma: f64, tolerance: f64) -> Result<QTable> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must be in [0, 1], got {gamma}")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let value = |q: &QTable, s: usize| if mdp.terminal[s] { 0.0 } else { q.max(s) };
    for _ in 0..MAX_SWEEPS {
        let mut next = q.clone();
        let mut delta = 0.0f64;
        for s in (0..mdp.n_states).filter(|&s| !mdp.terminal[s]) {
            for a in 0..mdp.n_actions {
                let v: f64 = mdp
                    .outcomes(s, a)
                    .iter()
                    .map(|&(s2, p, r)| p * (r + gamma * value(&q, s2)))
                    .sum();
                if !v.is_finite() {
                    return Err(Error::InvalidArgument("value iteration diverged".into()));
                }
                delta = delta.max((v - q.get(s, a)).abs());
                next.set(s, a, v);
            }
        }
        q = next;
        if delta < tolerance {
            return Ok(q);
        }
    }
    Err(Error::InvalidArgument(format!(
        "value iteration did not settle within {MAX_SWEEPS} sweeps at gamma {gamma}; \
         the MDP does not terminate"
    )))
}

/// Epsilon-greedy tabular Q-learning from the start state with step size
/// `1 / visits(s, a)`, for a fixed number of backups.
pub fn q_learning(
    mdp: &FiniteMdp,
    updates: usize,
    epsilon: f64,
    gamma: f64,
    max_episode_len: usize,
    rng: &mut dyn RngCore,
) -> QTable {
    let mut q = QTable::zeros(mdp.n_states, mdp.n_actions);
    let mut visits = vec![0u64; mdp.n_states * mdp.n_actions];
    let mut s = mdp.start;
    let mut t = 0;
    for _ in 0..updates {
        let a = if rng.random::<f64>() < epsilon {
            rng.random_range(0..mdp.n_actions)
        } else {
            q.greedy(s)
        };
        let (s2, r) = mdp.sample(s, a, rng);
        let n = &mut visits[s * mdp.n_actions + a];
        *n += 1;
        tabular_q_update(&mut q, s, a, r, s2, 1.0 / *n as f64, gamma);
        t += 1;
        if mdp.terminal[s2] || t >= max_episode_len {
            s = mdp.start;
            t = 0;
        } else {
            s = s2;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn update_hand_values() {
        let mut q = QTable::zeros(2, 2);
        tabular_q_update(&mut q, 0, 1, 1.0, 1, 0.5, 0.99);
        assert_eq!(q.get(0, 1), 0.5);

        let before = q.clone();
        tabular_q_update(&mut q, 0, 1, 7.0, 1, 0.0, 0.99);
        assert_eq!(q, before);

        let mut q = QTable::zeros(2, 2);
        q.set(1, 0, 1.0);
        tabular_q_update(&mut q, 0, 0, 0.0, 1, 1.0, 0.99);
        assert_eq!(q.get(0, 0), 0.99);
    }

    #[test]
    fn chain_optimal_values() {
        let q = value_iteration(&chain_mdp(2), 0.99, 1e-12).unwrap();
        assert!((q.get(1, 0) - 1.0).abs() < 1e-12);
        assert!((q.get(0, 0) - 0.99).abs() < 1e-12);
        // left from s1 lands in s0, worth 0.99 there
        assert!((q.get(1, 1) - 0.99 * 0.99).abs() < 1e-12);
        assert!((q.get(0, 1) - 0.99 * 0.99).abs() < 1e-12);
        assert_eq!(q.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn zero_rewards_and_myopic_cases() {
        let mut mdp = chain_mdp(3);
        for outs in &mut mdp.outcomes {
            for o in outs.iter_mut() {
                o.2 = 0.0;
            }
        }
        let q = value_iteration(&mdp, 0.99, 1e-10).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));

        let q = value_iteration(&chain_mdp(3), 0.0, 1e-10).unwrap();
        for s in 0..3 {
            for a in 0..3 {
                let r = if s == 1 && a == 0 { 1.0 } else { 0.0 };
                assert_eq!(q.get(s, a), r);
            }
        }
    }

    #[test]
    fn gamma_rules() {
        assert!(value_iteration(&chain_mdp(2), 1.5, 1e-6).is_err());
        // terminating chain still settles at gamma 1
        let q = value_iteration(&chain_mdp(2), 1.0, 1e-9).unwrap();
        assert!((q.get(0, 1) - 1.0).abs() < 1e-9);
        // self-loop paying 1 forever never settles
        let looping = FiniteMdp {
            n_states: 1,
            n_actions: 1,
            outcomes: vec![vec![(0, 1.0, 1.0)]],
            terminal: vec![false],
            start: 0,
        };
        assert!(matches!(
            value_iteration(&looping, 1.0, 1e-6),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn q_learning_matches_value_iteration() {
        let mdp = chain_mdp(2);
        let oracle = value_iteration(&mdp, 0.99, 1e-12).unwrap();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = q_learning(&mdp, 10_000, 0.2, 0.99, 50, &mut rng);
            let err = q.max_abs_diff(&oracle);
            assert!(err < 0.01, "seed {seed}: {err}");
        }
    }
}
