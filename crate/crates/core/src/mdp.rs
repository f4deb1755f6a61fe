//! Finite augmented MDP shared by the oracle and the tabular learners.
//!
//! The reachability cost is `d(s, x) = x * 1_G(s)` over the augmented state
//! `(s, x)`. Every quantity with `x = 0` is identically zero (the cost and all
//! successor costs vanish once the trajectory has entered `G`), so value
//! tables here store only the `x = 1` slice.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-stochasticity tolerance for transition and policy rows.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Sparse successor distribution: `(next_state, probability)` pairs.
pub type Row = Vec<(usize, f64)>;

/// Per-state coordinates used when writing safe-set tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinates {
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Row>,
    target: Vec<bool>,
    terminal: Vec<bool>,
    gamma: f64,
    coordinates: Option<Coordinates>,
}

impl FiniteMdp {
    /// Builds and validates an MDP. `rows` is indexed by `s * num_actions + a`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Row>,
        target: Vec<bool>,
        terminal: Vec<bool>,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::param("num_states/num_actions", "must be positive"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::param("gamma", format!("{gamma} not in (0, 1]")));
        }
        let expect = |got: usize, expected: usize, context| {
            if got == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, got, context })
            }
        };
        expect(rows.len(), num_states * num_actions, "transition rows")?;
        expect(target.len(), num_states, "target predicate")?;
        expect(terminal.len(), num_states, "terminal predicate")?;

        let mut merged = Vec::with_capacity(rows.len());
        for (idx, row) in rows.into_iter().enumerate() {
            let (state, action) = (idx / num_actions, idx % num_actions);
            merged.push(normalize_row(row, state, action, num_states)?);
        }
        for s in 0..num_states {
            if terminal[s] && target[s] {
                return Err(Error::TerminalTargetOverlap(s));
            }
            if terminal[s] {
                for a in 0..num_actions {
                    let row = &merged[s * num_actions + a];
                    if !(row.len() == 1 && row[0].0 == s) {
                        return Err(Error::TerminalNotAbsorbing(s));
                    }
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            rows: merged,
            target,
            terminal,
            gamma,
            coordinates: None,
        })
    }

    pub fn with_coordinates(mut self, coordinates: Coordinates) -> Result<Self> {
        if coordinates.values.len() != self.num_states {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                got: coordinates.values.len(),
                context: "coordinates",
            });
        }
        self.coordinates = Some(coordinates);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_target(&self, s: usize) -> bool {
        self.target[s]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// Neither in `G` nor terminal: the states where learning and improvement happen.
    pub fn is_interior(&self, s: usize) -> bool {
        !self.target[s] && !self.terminal[s]
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.num_actions + a]
    }

    pub fn coordinates(&self) -> Option<&Coordinates> {
        self.coordinates.as_ref()
    }

    pub fn target_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states).filter(|&s| self.target[s])
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_states).filter(|&s| self.terminal[s])
    }

    /// `sum_{s'} p(s'|s,a) values[s']`.
    pub fn expected(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        self.row(s, a).iter().map(|&(n, p)| p * values[n]).sum()
    }

    pub fn stage_cost(&self, s: usize, flag: bool) -> f64 {
        stage_cost(self.target[s], flag)
    }

    pub fn flag_step(&self, s: usize, flag: bool) -> bool {
        flag_step(self.target[s], flag)
    }

    pub fn check_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_states {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                got: values.len(),
                context: "value table",
            });
        }
        Ok(())
    }

    pub fn check_policy(&self, policy: &StochasticPolicy) -> Result<()> {
        if policy.num_states() != self.num_states || policy.num_actions() != self.num_actions {
            return Err(Error::DimensionMismatch {
                expected: self.num_states * self.num_actions,
                got: policy.num_states() * policy.num_actions(),
                context: "policy shape",
            });
        }
        Ok(())
    }

    pub fn to_file(&self) -> MdpFile {
        let mut transitions = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for &(n, p) in self.row(s, a) {
                    transitions.push((s, a, n, p));
                }
            }
        }
        MdpFile {
            num_states: self.num_states,
            num_actions: self.num_actions,
            transitions,
            target: self.target_states().collect(),
            terminal: self.terminal_states().collect(),
            gamma: self.gamma,
            coordinates: self.coordinates.clone(),
        }
    }

    pub fn from_file(file: MdpFile) -> Result<Self> {
        let MdpFile { num_states, num_actions, transitions, target, terminal, gamma, coordinates } =
            file;
        let mut target_mask = vec![false; num_states];
        let mut terminal_mask = vec![false; num_states];
        for (list, mask, context) in [
            (&target, &mut target_mask, "target list"),
            (&terminal, &mut terminal_mask, "terminal list"),
        ] {
            for &s in list {
                if s >= num_states {
                    return Err(Error::IndexOutOfRange { index: s, limit: num_states, context });
                }
                mask[s] = true;
            }
        }
        let mut rows = vec![Vec::new(); num_states * num_actions];
        for (s, a, n, p) in transitions {
            if s >= num_states || n >= num_states {
                return Err(Error::IndexOutOfRange {
                    index: s.max(n),
                    limit: num_states,
                    context: "transition triple",
                });
            }
            if a >= num_actions {
                return Err(Error::IndexOutOfRange {
                    index: a,
                    limit: num_actions,
                    context: "transition triple",
                });
            }
            rows[s * num_actions + a].push((n, p));
        }
        // Omitted rows of absorbing states (terminal or target) default to self-loops.
        for s in 0..num_states {
            if terminal_mask[s] || target_mask[s] {
                for a in 0..num_actions {
                    let row = &mut rows[s * num_actions + a];
                    if row.is_empty() {
                        row.push((s, 1.0));
                    }
                }
            }
        }
        let mdp = Self::new(num_states, num_actions, rows, target_mask, terminal_mask, gamma)?;
        match coordinates {
            Some(c) => mdp.with_coordinates(c),
            None => Ok(mdp),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let file: MdpFile = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("invalid MDP file: {e}")))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn normalize_row(row: Row, state: usize, action: usize, num_states: usize) -> Result<Row> {
    let mut merged: Row = Vec::with_capacity(row.len());
    for (n, p) in row {
        if n >= num_states {
            return Err(Error::IndexOutOfRange { index: n, limit: num_states, context: "successor" });
        }
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidProbability { state, action, prob: p });
        }
        if p == 0.0 {
            continue;
        }
        match merged.iter_mut().find(|(m, _)| *m == n) {
            Some(entry) => entry.1 += p,
            None => merged.push((n, p)),
        }
    }
    merged.sort_by_key(|&(n, _)| n);
    let sum: f64 = merged.iter().map(|&(_, p)| p).sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NonStochasticRow { state, action, sum });
    }
    Ok(merged)
}

/// On-disk MDP layout (JSON). Transitions are sparse `[s, a, s', p]` quadruples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<(usize, usize, usize, f64)>,
    pub target: Vec<usize>,
    pub terminal: Vec<usize>,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinates: Option<Coordinates>,
}

/// `d(s, x) = x * 1_G(s)`.
pub fn stage_cost(in_target: bool, flag: bool) -> f64 {
    if in_target && flag {
        1.0
    } else {
        0.0
    }
}

/// `x_{t+1} = x_t * 1_{G^c}(s_t)`.
pub fn flag_step(in_target: bool, flag: bool) -> bool {
    flag && !in_target
}

/// Environment state paired with the "not yet entered G" flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState<S> {
    pub state: S,
    pub flag: bool,
}

impl<S> AugmentedState<S> {
    pub fn reset(state: S) -> Self {
        Self { state, flag: true }
    }

    /// Moves to `next`, updating the flag from whether the current state is in `G`.
    pub fn advance(&mut self, in_target: bool, next: S) {
        self.flag = flag_step(in_target, self.flag);
        self.state = next;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { num_actions, probs: vec![1.0 / num_actions as f64; num_states * num_actions] }
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::IndexOutOfRange { index: a, limit: num_actions, context: "action" });
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Self { num_actions, probs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_actions == 0 {
            return Err(Error::param("policy", "needs at least one state and action"));
        }
        let mut probs = Vec::with_capacity(rows.len() * num_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::DimensionMismatch {
                    expected: num_actions,
                    got: row.len(),
                    context: "policy row",
                });
            }
            check_distribution(row, s)?;
            probs.extend_from_slice(row);
        }
        Ok(Self { num_actions, probs })
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn set_row(&mut self, s: usize, row: &[f64]) -> Result<()> {
        if row.len() != self.num_actions {
            return Err(Error::DimensionMismatch {
                expected: self.num_actions,
                got: row.len(),
                context: "policy row",
            });
        }
        check_distribution(row, s)?;
        self.probs[s * self.num_actions..(s + 1) * self.num_actions].copy_from_slice(row);
        Ok(())
    }

    /// `sum_a pi(a|s) q[s, a]` for a flat `(state, action)` table.
    pub fn expectation(&self, s: usize, q: &[f64]) -> f64 {
        let start = s * self.num_actions;
        self.row(s).iter().zip(&q[start..start + self.num_actions]).map(|(p, v)| p * v).sum()
    }

    /// Inverse-CDF sample with a uniform draw `u` in `[0, 1)`.
    pub fn sample_with(&self, s: usize, u: f64) -> usize {
        let row = self.row(s);
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

fn check_distribution(row: &[f64], state: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidPolicyRow { state, sum });
    }
    Ok(())
}

/// One application of the policy Bellman operator on the `x = 1` slice.
///
/// Terminal states map to 0, states in `G` map to 1 (their successors carry
/// flag 0), and every other state to `gamma * E_pi E_p V(s')`.
pub fn bellman_apply(mdp: &FiniteMdp, policy: &StochasticPolicy, values: &[f64]) -> Result<Vec<f64>> {
    mdp.check_values(values)?;
    mdp.check_policy(policy)?;
    let gamma = mdp.gamma();
    Ok((0..mdp.num_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else if mdp.is_target(s) {
                1.0
            } else {
                let row = policy.row(s);
                let boot: f64 = (0..mdp.num_actions())
                    .filter(|&a| row[a] > 0.0)
                    .map(|a| row[a] * mdp.expected(s, a, values))
                    .sum();
                gamma * boot
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryStep<S, A> {
    pub state: S,
    pub action: A,
    pub target_hit: bool,
    pub next_state: S,
}

/// One episode. Target entry ends the episode, so at most the last step has `target_hit`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    steps: Vec<TrajectoryStep<S, A>>,
    terminated: bool,
    truncated: bool,
}

impl<S, A> Default for Trajectory<S, A> {
    fn default() -> Self {
        Self { steps: Vec::new(), terminated: false, truncated: false }
    }
}

impl<S, A> Trajectory<S, A> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: TrajectoryStep<S, A>) -> Result<()> {
        if self.is_finished() {
            return Err(Error::param("trajectory", "episode already ended"));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn mark_terminated(&mut self) {
        self.terminated = true;
    }

    pub fn mark_truncated(&mut self) {
        self.truncated = true;
    }

    pub fn hit_target(&self) -> bool {
        self.steps.last().is_some_and(|s| s.target_hit)
    }

    pub fn is_finished(&self) -> bool {
        self.terminated || self.truncated || self.hit_target()
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// Safe iff the episode ended without visiting `G` (terminated or timed out).
    pub fn is_safe(&self) -> bool {
        !self.hit_target()
    }

    pub fn steps(&self) -> &[TrajectoryStep<S, A>] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.steps.iter().map(|s| &s.state)
    }

    pub fn clear(&mut self) {
        self.steps.clear();
        self.terminated = false;
        self.truncated = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 0: interior, 1: safe terminal, 2: target.
    fn three_state(split: f64) -> FiniteMdp {
        FiniteMdp::new(
            3,
            1,
            vec![vec![(1, 1.0 - split), (2, split)], vec![(1, 1.0)], vec![(2, 1.0)]],
            vec![false, false, true],
            vec![false, true, false],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn stage_cost_table() {
        assert_eq!(stage_cost(true, true), 1.0);
        assert_eq!(stage_cost(false, true), 0.0);
        assert_eq!(stage_cost(true, false), 0.0);
        assert_eq!(stage_cost(false, false), 0.0);
    }

    #[test]
    fn flag_step_table() {
        assert!(flag_step(false, true));
        assert!(!flag_step(true, true));
        assert!(!flag_step(true, false));
        assert!(!flag_step(false, false));
    }

    #[test]
    fn augmented_state_resets_with_flag_set() {
        let mut x = AugmentedState::reset(3usize);
        assert!(x.flag);
        x.advance(true, 4);
        assert_eq!(x, AugmentedState { state: 4, flag: false });
        x.advance(false, 5);
        assert!(!x.flag);
    }

    #[test]
    fn bellman_on_terminal_and_target() {
        let mdp = three_state(0.5);
        let pi = StochasticPolicy::uniform(3, 1);
        let out = bellman_apply(&mdp, &pi, &[0.3, 0.7, 0.2]).unwrap();
        assert_eq!(out[1], 0.0);
        assert_eq!(out[2], 1.0);
    }

    #[test]
    fn bellman_half_split() {
        let mdp = three_state(0.5);
        let pi = StochasticPolicy::uniform(3, 1);
        let out = bellman_apply(&mdp, &pi, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(out[0], 0.5);
    }

    #[test]
    fn bellman_dimension_mismatch() {
        let mdp = three_state(0.5);
        let pi = StochasticPolicy::uniform(3, 1);
        assert!(matches!(
            bellman_apply(&mdp, &pi, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_rows() {
        let err = FiniteMdp::new(
            2,
            1,
            vec![vec![(0, 0.5), (1, 0.4)], vec![(1, 1.0)]],
            vec![false, false],
            vec![false, true],
            1.0,
        );
        assert!(matches!(err, Err(Error::NonStochasticRow { state: 0, .. })));
        let err = FiniteMdp::new(
            2,
            1,
            vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            vec![false, false],
            vec![false, true],
            1.0,
        );
        assert!(matches!(err, Err(Error::TerminalNotAbsorbing(1))));
    }

    #[test]
    fn file_roundtrip_and_absorbing_defaults() {
        let file = MdpFile {
            num_states: 3,
            num_actions: 2,
            transitions: vec![(0, 0, 1, 1.0), (0, 1, 2, 0.25), (0, 1, 1, 0.75)],
            target: vec![2],
            terminal: vec![1],
            gamma: 0.9,
            coordinates: None,
        };
        let mdp = FiniteMdp::from_file(file).unwrap();
        assert_eq!(mdp.row(1, 1), &[(1, 1.0)]);
        assert_eq!(mdp.row(0, 1), &[(1, 0.75), (2, 0.25)]);
        let back = FiniteMdp::from_file(mdp.to_file()).unwrap();
        assert_eq!(back, mdp);
    }

    #[test]
    fn mdp_file_keys() {
        let mdp = three_state(0.25);
        let json = serde_json::to_value(mdp.to_file()).unwrap();
        for key in ["num_states", "num_actions", "transitions", "target", "terminal", "gamma"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn policy_sampling_follows_cdf() {
        let pi = StochasticPolicy::from_rows(vec![vec![0.2, 0.0, 0.8]]).unwrap();
        assert_eq!(pi.sample_with(0, 0.1), 0);
        assert_eq!(pi.sample_with(0, 0.2), 2);
        assert_eq!(pi.sample_with(0, 0.999_999), 2);
        assert!(StochasticPolicy::from_rows(vec![vec![0.5, 0.6]]).is_err());
    }

    #[test]
    fn trajectory_stops_after_target() {
        let mut tr: Trajectory<usize, usize> = Trajectory::new();
        tr.push(TrajectoryStep { state: 0, action: 0, target_hit: false, next_state: 1 }).unwrap();
        tr.push(TrajectoryStep { state: 1, action: 0, target_hit: true, next_state: 1 }).unwrap();
        assert!(!tr.is_safe());
        assert!(tr
            .push(TrajectoryStep { state: 1, action: 0, target_hit: false, next_state: 2 })
            .is_err());
    }
}
