//! Fixed-capacity experience replay with uniform sampling.

use crate::error::{validation, Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Actor-space action: ρ alone for optimization-driven agents, the full
    /// output vector for model-free DDPG, the action index for DQN.
    pub action: Vec<f64>,
    pub reward: f64,
    pub reward_opt: Option<f64>,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub executed_was_optimized: bool,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    warmup: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, warmup: usize) -> Result<Self> {
        if capacity == 0 || warmup > capacity {
            return Err(validation(format!(
                "replay capacity {capacity} must be positive and >= warmup {warmup}"
            )));
        }
        Ok(ReplayBuffer {
            capacity,
            warmup,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
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

    /// Past warmup and non-empty.
    pub fn ready(&self) -> bool {
        !self.items.is_empty() && self.items.len() >= self.warmup
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.reward.is_finite() || t.reward_opt.is_some_and(|r| !r.is_finite()) {
            return Err(validation("transition reward is not finite"));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `batch` indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
        if !self.ready() {
            return Err(Error::State(format!(
                "replay holds {} transitions, warmup is {}",
                self.items.len(),
                self.warmup
            )));
        }
        Ok((0..batch).map(|_| rng.below(self.items.len())).collect())
    }

    pub fn sample(&self, batch: usize, rng: &mut RngStream) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
