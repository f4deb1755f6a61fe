//! Model-free sampler over a known [`FiniteMdp`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StepResult;
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;

/// Runs a [`FiniteMdp`] as an episodic environment. Episodes start uniformly
/// over interior states.
#[derive(Debug, Clone)]
pub struct TabularEnv<'a> {
    mdp: &'a FiniteMdp,
    starts: Vec<usize>,
    time_limit: usize,
    rng: ChaCha8Rng,
    state: usize,
    t: usize,
}

impl<'a> TabularEnv<'a> {
    pub fn new(mdp: &'a FiniteMdp, time_limit: usize, seed: u64) -> Result<Self> {
        let starts: Vec<usize> = (0..mdp.num_states()).filter(|&s| mdp.is_interior(s)).collect();
        if starts.is_empty() {
            return Err(Error::param("mdp", "no interior states to start from"));
        }
        if time_limit == 0 {
            return Err(Error::param("time_limit", "must be positive"));
        }
        let mut env =
            Self { mdp, starts, time_limit, rng: ChaCha8Rng::seed_from_u64(seed), state: 0, t: 0 };
        env.reset();
        Ok(env)
    }

    pub fn mdp(&self) -> &FiniteMdp {
        self.mdp
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.starts[self.rng.random_range(0..self.starts.len())];
        self.t = 0;
        self.state
    }

    /// Samples one transition. Taken from a state in `G` the step reports
    /// `target_hit` and stays put; the caller resets.
    pub fn step(&mut self, action: usize) -> Result<StepResult<usize>> {
        let s = self.state;
        if action >= self.mdp.num_actions() {
            return Err(Error::IndexOutOfRange {
                index: action,
                limit: self.mdp.num_actions(),
                context: "tabular action",
            });
        }
        if self.mdp.is_terminal(s) {
            return Err(Error::SteppedFromTerminal(s));
        }
        self.t += 1;
        if self.mdp.is_target(s) {
            return Ok(StepResult { next_state: s, target_hit: true, done: false, truncated: false });
        }
        let next = sample_row(self.mdp.row(s, action), self.rng.random());
        self.state = next;
        let done = self.mdp.is_terminal(next);
        Ok(StepResult {
            next_state: next,
            target_hit: false,
            done,
            truncated: !done && self.t >= self.time_limit,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

fn sample_row(row: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(n, p) in row {
        acc += p;
        if u < acc {
            return n;
        }
    }
    row.last().expect("validated rows are non-empty").0
}
