//! Tabular Lyapunov safety specification: Q-learning of `(Q_V, Q_T)`,
//! the auxiliary cost, and LP-based safe and exploratory policy improvement.

mod run;

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lp::{solve_policy_lp, LpSense, PolicyLp};
use crate::mdp::{FiniteMdp, StochasticPolicy};

pub use run::{run_tabular, Algo, IterationState, TabularConfig, TabularRun};

const QTABLE_MAGIC: &[u8; 8] = b"RSPECQT1";

/// Exponent of the step-size schedule `1 / (1 + visits)^p`.
pub const LR_EXPONENT: f64 = 0.7;

/// Q-functions for the probability of unsafety and the first-hitting time.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    num_states: usize,
    num_actions: usize,
    pub q_v: Vec<f64>,
    pub q_t: Vec<f64>,
    pub visits: Vec<u64>,
}

/// One observed step `(s_t, a_t, 1_G(s_t), s_{t+1})`; `done` marks a terminal `s_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub target_hit: bool,
    pub next_state: usize,
    pub done: bool,
}

impl QTables {
    /// `q_v = 1`, `q_t = 0` everywhere.
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let n = num_states * num_actions;
        Self { num_states, num_actions, q_v: vec![1.0; n], q_t: vec![0.0; n], visits: vec![0; n] }
    }

    /// `q_v ~ U[low, 1]`, `q_t = 0`.
    pub fn random<R: Rng + ?Sized>(num_states: usize, num_actions: usize, low: f64, rng: &mut R) -> Self {
        let mut t = Self::new(num_states, num_actions);
        for q in &mut t.q_v {
            *q = rng.random_range(low..=1.0);
        }
        t
    }

    /// Wraps given tables (for example exact DP quantities) with zero visit counts.
    pub fn from_tables(num_states: usize, num_actions: usize, q_v: Vec<f64>, q_t: Vec<f64>) -> Result<Self> {
        let n = num_states * num_actions;
        for (len, context) in [(q_v.len(), "q_v table"), (q_t.len(), "q_t table")] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len, context });
            }
        }
        Ok(Self { num_states, num_actions, q_v, q_t, visits: vec![0; n] })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn learning_rate(&self, s: usize, a: usize) -> f64 {
        learning_rate(self.visits[s * self.num_actions + a])
    }

    fn row_range(&self, s: usize) -> std::ops::Range<usize> {
        s * self.num_actions..(s + 1) * self.num_actions
    }

    pub fn q_v_row(&self, s: usize) -> &[f64] {
        &self.q_v[self.row_range(s)]
    }

    pub fn q_t_row(&self, s: usize) -> &[f64] {
        &self.q_t[self.row_range(s)]
    }

    /// Zeroes both rows of `s`, as known for terminal states.
    pub fn clear_state(&mut self, s: usize) {
        let r = self.row_range(s);
        self.q_v[r.clone()].fill(0.0);
        self.q_t[r].fill(0.0);
    }

    /// Per-state `(V̂, T̂)` under `policy`.
    pub fn state_values(&self, policy: &StochasticPolicy) -> (Vec<f64>, Vec<f64>) {
        (0..self.num_states)
            .map(|s| (policy.expectation(s, &self.q_v), policy.expectation(s, &self.q_t)))
            .unzip()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.q_v.len() * 24);
        buf.extend_from_slice(QTABLE_MAGIC);
        buf.extend_from_slice(&(self.num_states as u64).to_le_bytes());
        buf.extend_from_slice(&(self.num_actions as u64).to_le_bytes());
        for x in self.q_v.iter().chain(&self.q_t) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for v in &self.visits {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 24 || &buf[..8] != QTABLE_MAGIC {
            return Err(Error::format(path, "missing RSPECQT1 header"));
        }
        let word = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
        let (ns, na) = (word(8) as usize, word(16) as usize);
        let n = ns.checked_mul(na).ok_or_else(|| Error::format(path, "table size overflow"))?;
        if buf.len() != 24 + n * 24 {
            return Err(Error::format(path, "truncated q-table payload"));
        }
        let q_v = (0..n).map(|i| f64::from_bits(word(24 + 8 * i))).collect();
        let q_t = (0..n).map(|i| f64::from_bits(word(24 + 8 * (n + i)))).collect();
        let visits = (0..n).map(|i| word(24 + 8 * (2 * n + i))).collect();
        Ok(Self { num_states: ns, num_actions: na, q_v, q_t, visits })
    }
}

/// `1 / (1 + visits)^0.7`: square-summable but not summable.
pub fn learning_rate(visits: u64) -> f64 {
    (1.0 + visits as f64).powf(-LR_EXPONENT)
}

/// One expected-SARSA style update of both tables under `policy`.
pub fn q_update(
    tables: &mut QTables,
    tr: &Transition,
    policy: &StochasticPolicy,
    learning_rate: f64,
    gamma: f64,
) -> Result<()> {
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::param("learning_rate", format!("{learning_rate} not in (0, 1]")));
    }
    let k = tr.state * tables.num_actions + tr.action;
    if tr.target_hit {
        tables.q_v[k] = 1.0;
        tables.q_t[k] = 0.0;
    } else {
        let (boot_v, boot_t) = if tr.done {
            (0.0, 0.0)
        } else {
            (policy.expectation(tr.next_state, &tables.q_v), policy.expectation(tr.next_state, &tables.q_t))
        };
        let tau = learning_rate;
        tables.q_v[k] = (1.0 - tau) * tables.q_v[k] + tau * gamma * boot_v;
        tables.q_t[k] = (1.0 - tau) * tables.q_t[k] + tau * (1.0 + gamma * boot_t);
    }
    tables.visits[k] += 1;
    Ok(())
}

/// `Q_L = Q_V + ε Q_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovQ {
    pub q_l: Vec<f64>,
    pub epsilon: f64,
}

impl LyapunovQ {
    pub fn new(tables: &QTables, epsilon: f64) -> Self {
        let q_l = tables.q_v.iter().zip(&tables.q_t).map(|(v, t)| v + epsilon * t).collect();
        Self { q_l, epsilon }
    }
}

/// `ε = min over {V̂ ≤ α} of (α − V̂) / T̂`.
///
/// Returns 0 when no state qualifies. States with `T̂ = 0` are skipped unless
/// their slack is zero, in which case they pin ε to 0.
pub fn auxiliary_cost(values: &[f64], times: &[f64], alpha: f64) -> f64 {
    let mut eps = f64::INFINITY;
    for (&v, &t) in values.iter().zip(times) {
        if v > alpha {
            continue;
        }
        let slack = alpha - v;
        if t > 0.0 {
            eps = eps.min(slack / t);
        } else if slack <= 0.0 {
            eps = 0.0;
        }
    }
    if eps.is_finite() {
        eps
    } else {
        0.0
    }
}

/// [`auxiliary_cost`] from the tables under `policy`, over the states in `mask`.
pub fn auxiliary_cost_from_tables(
    tables: &QTables,
    policy: &StochasticPolicy,
    alpha: f64,
    mask: &[bool],
) -> f64 {
    let (v, t) = tables.state_values(policy);
    let pick = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x).collect()
    };
    auxiliary_cost(&pick(v), &pick(t), alpha)
}

fn improve(
    mdp: &FiniteMdp,
    tables: &QTables,
    epsilon: f64,
    current: &StochasticPolicy,
    sense: LpSense,
) -> Result<StochasticPolicy> {
    if !(epsilon >= 0.0) {
        return Err(Error::param("epsilon", format!("{epsilon} must be nonnegative")));
    }
    mdp.check_policy(current)?;
    let lyap = LyapunovQ::new(tables, epsilon);
    let mut next = current.clone();
    for s in (0..mdp.num_states()).filter(|&s| mdp.is_interior(s)) {
        let r = tables.row_range(s);
        let budget = current.expectation(s, &lyap.q_l) + epsilon;
        let lp = PolicyLp::new(tables.q_v[r.clone()].to_vec(), lyap.q_l[r].to_vec(), budget, sense);
        next.set_row(s, &solve_policy_lp(&lp)?.probs)?;
    }
    Ok(next)
}

/// Safest policy in the `L`-induced set: per-state LP minimizing `Q_V`.
pub fn improve_ss_policy(
    mdp: &FiniteMdp,
    tables: &QTables,
    epsilon: f64,
    current: &StochasticPolicy,
) -> Result<StochasticPolicy> {
    improve(mdp, tables, epsilon, current, LpSense::Minimize)
}

/// Most aggressive policy in the `L`-induced set: per-state LP maximizing `Q_V`.
pub fn improve_exploratory_policy(
    mdp: &FiniteMdp,
    tables: &QTables,
    epsilon: f64,
    current: &StochasticPolicy,
) -> Result<StochasticPolicy> {
    improve(mdp, tables, epsilon, current, LpSense::Maximize)
}

/// Unconstrained improvement: deterministic argmin of `Q_V` on interior states.
pub fn greedy_policy(mdp: &FiniteMdp, tables: &QTables, current: &StochasticPolicy) -> Result<StochasticPolicy> {
    mdp.check_policy(current)?;
    let mut next = current.clone();
    let mut row = vec![0.0; mdp.num_actions()];
    for s in (0..mdp.num_states()).filter(|&s| mdp.is_interior(s)) {
        let q = tables.q_v_row(s);
        let best = (1..q.len()).fold(0, |b, a| if q[a] < q[b] { a } else { b });
        row.fill(0.0);
        row[best] = 1.0;
        next.set_row(s, &row)?;
    }
    Ok(next)
}
