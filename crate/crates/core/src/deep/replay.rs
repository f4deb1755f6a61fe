use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// One stored transition `(s_t, a_t, 1_G(s_t), s_{t+1})` plus the terminal flag of `s_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: [f64; 2],
    /// Normalized action in `[-1, 1]`.
    pub action: f64,
    pub target_hit: bool,
    pub next_state: [f64; 2],
    pub done: bool,
}

/// Replay memory split into safe and unsafe (`target_hit`) partitions, each a
/// FIFO ring of `capacity` entries.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    safe: Ring,
    unsafe_: Ring,
}

#[derive(Debug, Clone, Default)]
struct Ring {
    items: Vec<Experience>,
    next: usize,
}

impl Ring {
    fn push(&mut self, e: Experience, capacity: usize) {
        if self.items.len() < capacity {
            self.items.push(e);
        } else {
            self.items[self.next] = e;
        }
        self.next = (self.next + 1) % capacity;
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("replay_capacity", "must be positive"));
        }
        Ok(Self { capacity, safe: Ring::default(), unsafe_: Ring::default() })
    }

    pub fn push(&mut self, e: Experience) {
        let ring = if e.target_hit { &mut self.unsafe_ } else { &mut self.safe };
        ring.push(e, self.capacity);
    }

    pub fn len(&self) -> usize {
        self.safe.items.len() + self.unsafe_.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_unsafe(&self) -> usize {
        self.unsafe_.items.len()
    }

    /// Samples `batch` entries with replacement; `round(unsafe_frac * batch)`
    /// of them come from the unsafe partition, or as many as it holds when
    /// smaller. An empty partition is made up from the other one.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, unsafe_frac: f64, rng: &mut R) -> Vec<Experience> {
        if self.is_empty() {
            return Vec::new();
        }
        let (safe, unsafe_) = (&self.safe.items, &self.unsafe_.items);
        let mut k = ((unsafe_frac * batch as f64).round() as usize).min(unsafe_.len()).min(batch);
        if safe.is_empty() {
            k = batch;
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..k {
            out.push(unsafe_[rng.random_range(0..unsafe_.len())]);
        }
        for _ in k..batch {
            out.push(safe[rng.random_range(0..safe.len())]);
        }
        out
    }
}

/// Ornstein-Uhlenbeck process `x <- x + theta (mu - x) + sigma N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, theta: f64, sigma: f64) -> Self {
        Self { mu: 0.0, theta, sigma, state: vec![0.0; dim] }
    }

    pub fn reset(&mut self) {
        self.state.fill(self.mu);
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.state {
            let z: f64 = StandardNormal.sample(rng);
            *x += self.theta * (self.mu - *x) + self.sigma * z;
        }
        &self.state
    }
}
