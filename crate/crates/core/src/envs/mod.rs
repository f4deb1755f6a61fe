pub mod chain;
pub mod integrator;
pub mod tabular;

pub use chain::{chain_step, ChainAction, ChainWorldConfig};
pub use integrator::{discretize_integrator, integrator_step, IntegratorConfig, IntegratorEnv};
pub use tabular::TabularEnv;

/// Outcome of one environment step.
///
/// `target_hit` refers to the state the step was taken from; `done` to the
/// state it led to. Target entry resets the episode, so the two are never both
/// set. `truncated` marks a time-limit reset, which keeps `done = false`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult<S> {
    pub next_state: S,
    pub target_hit: bool,
    pub done: bool,
    pub truncated: bool,
}

impl<S> StepResult<S> {
    pub fn episode_over(&self) -> bool {
        self.target_hit || self.done || self.truncated
    }
}
