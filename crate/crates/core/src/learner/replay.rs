use rand::{Rng, RngCore};

use crate::env::Features;
use crate::error::{Error, Result};
use crate::geometry::ActionIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: Features,
    pub action: ActionIndex,
    pub reward: f64,
    pub next_state: Features,
    pub terminal: bool,
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    /// Slot that the next push overwrites once the buffer is full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// The `k`-th oldest surviving transition.
    pub fn get(&self, k: usize) -> Option<&Transition> {
        if k >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + k) % self.items.len()])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).map(move |k| self.get(k).unwrap())
    }

    /// Uniform draw of `batch_size` live positions, with replacement.
    pub fn sample_indices(
        &self,
        batch_size: usize,
        rng: &mut dyn RngCore,
        out: &mut Vec<usize>,
    ) -> Result<()> {
        if self.len() < batch_size || self.is_empty() {
            return Err(Error::NotReady {
                len: self.len(),
                needed: batch_size.max(1),
            });
        }
        out.clear();
        let n = self.len();
        out.extend((0..batch_size).map(|_| rng.random_range(0..n)));
        Ok(())
    }

    pub fn sample(&self, batch_size: usize, rng: &mut dyn RngCore) -> Result<Vec<Transition>> {
        let mut idx = Vec::with_capacity(batch_size);
        self.sample_indices(batch_size, rng, &mut idx)?;
        Ok(idx.into_iter().map(|k| self.get(k).copied().unwrap()).collect())
    }
}
