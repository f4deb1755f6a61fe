//! One-dimensional chain world with slippery moves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StepResult;
use crate::error::{Error, Result};
use crate::mdp::{Coordinates, FiniteMdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainAction {
    Left = 0,
    Right = 1,
}

impl ChainAction {
    pub fn from_index(a: usize) -> Result<Self> {
        match a {
            0 => Ok(Self::Left),
            1 => Ok(Self::Right),
            _ => Err(Error::IndexOutOfRange { index: a, limit: 2, context: "chain action" }),
        }
    }

    fn reversed(self) -> Self {
        match self {
            Self::Left => Self::Right,
            Self::Right => Self::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainWorldConfig {
    pub num_states: usize,
    /// Probability that a move goes the opposite way.
    pub slip_prob: f64,
    pub leftmost_terminal: bool,
    pub rightmost_target: bool,
    pub time_limit: usize,
    pub gamma: f64,
}

impl Default for ChainWorldConfig {
    fn default() -> Self {
        Self {
            num_states: 5,
            slip_prob: 0.1,
            leftmost_terminal: true,
            rightmost_target: true,
            time_limit: 200,
            gamma: 1.0,
        }
    }
}

impl ChainWorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_states < 3 {
            return Err(Error::param("num_states", "chain needs at least 3 states"));
        }
        if !(0.0..0.5).contains(&self.slip_prob) {
            return Err(Error::param("slip_prob", format!("{} not in [0, 0.5)", self.slip_prob)));
        }
        if self.time_limit == 0 {
            return Err(Error::param("time_limit", "must be positive"));
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.leftmost_terminal && s == 0
    }

    pub fn is_target(&self, s: usize) -> bool {
        self.rightmost_target && s == self.num_states - 1
    }

    /// Position after an (already slipped) move; closed ends reflect.
    fn moved(&self, s: usize, dir: ChainAction) -> usize {
        match dir {
            ChainAction::Left => s.saturating_sub(1),
            ChainAction::Right => (s + 1).min(self.num_states - 1),
        }
    }

    pub fn to_mdp(&self) -> Result<FiniteMdp> {
        self.validate()?;
        let n = self.num_states;
        let mut rows = Vec::with_capacity(n * 2);
        for s in 0..n {
            for a in [ChainAction::Left, ChainAction::Right] {
                if self.is_terminal(s) || self.is_target(s) {
                    rows.push(vec![(s, 1.0)]);
                } else {
                    rows.push(vec![
                        (self.moved(s, a), 1.0 - self.slip_prob),
                        (self.moved(s, a.reversed()), self.slip_prob),
                    ]);
                }
            }
        }
        let target = (0..n).map(|s| self.is_target(s)).collect();
        let terminal = (0..n).map(|s| self.is_terminal(s)).collect();
        FiniteMdp::new(n, 2, rows, target, terminal, self.gamma)?.with_coordinates(Coordinates {
            names: vec!["position".into()],
            values: (0..n).map(|s| vec![s as f64]).collect(),
        })
    }
}

/// Samples one chain transition from `state`.
pub fn chain_step<R: Rng + ?Sized>(
    config: &ChainWorldConfig,
    state: usize,
    action: ChainAction,
    rng: &mut R,
) -> Result<StepResult<usize>> {
    if state >= config.num_states {
        return Err(Error::IndexOutOfRange {
            index: state,
            limit: config.num_states,
            context: "chain state",
        });
    }
    if config.is_terminal(state) {
        return Err(Error::SteppedFromTerminal(state));
    }
    if config.is_target(state) {
        return Ok(StepResult { next_state: state, target_hit: true, done: false, truncated: false });
    }
    let dir = if rng.random::<f64>() < config.slip_prob { action.reversed() } else { action };
    let next = config.moved(state, dir);
    Ok(StepResult {
        next_state: next,
        target_hit: false,
        done: config.is_terminal(next),
        truncated: false,
    })
}
