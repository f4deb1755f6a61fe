//! Randomized double integrator and its grid discretization.
//!
//! State is `(position, velocity)`, the control is an acceleration. With
//! probability `perturb_prob` the applied acceleration is pushed to full
//! magnitude, `action_bound * sign(u)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StepResult;
use crate::error::{Error, Result};
use crate::mdp::{Coordinates, FiniteMdp, Row};

pub type IntegratorState = [f64; 2];

/// Axis-aligned box over `(position, velocity)`, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub position: (f64, f64),
    pub velocity: (f64, f64),
}

impl StateBox {
    pub const fn symmetric(position: f64, velocity: f64) -> Self {
        Self { position: (-position, position), velocity: (-velocity, velocity) }
    }

    pub fn contains(&self, s: IntegratorState) -> bool {
        (self.position.0..=self.position.1).contains(&s[0])
            && (self.velocity.0..=self.velocity.1).contains(&s[1])
    }

    pub fn is_inside(&self, other: &StateBox) -> bool {
        other.position.0 <= self.position.0
            && self.position.1 <= other.position.1
            && other.velocity.0 <= self.velocity.0
            && self.velocity.1 <= other.velocity.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub action_bound: f64,
    /// Safe region; its complement is the target set.
    pub target_box: StateBox,
    pub terminal_box: StateBox,
    pub perturb_prob: f64,
    /// Grid nodes per axis `(position, velocity)`.
    pub grid: (usize, usize),
    /// Extent covered by the grid; successors beyond it go to the exterior state.
    pub grid_box: StateBox,
    /// Number of evenly spaced action levels for tabular use.
    pub action_levels: usize,
    /// Reset distribution: uniform over this box.
    pub start_box: StateBox,
    pub time_limit: usize,
    pub gamma: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            action_bound: 0.5,
            target_box: StateBox::symmetric(1.0, 0.5),
            terminal_box: StateBox::symmetric(0.2, 3.75e-3),
            perturb_prob: 0.5,
            grid: (41, 41),
            grid_box: StateBox::symmetric(1.2, 0.6),
            action_levels: 3,
            start_box: StateBox::symmetric(1.0, 0.5),
            time_limit: 1000,
            gamma: 1.0 - 1e-4,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::param("dt", "must be positive"));
        }
        if !(self.action_bound > 0.0) {
            return Err(Error::param("action_bound", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return Err(Error::param("perturb_prob", "must lie in [0, 1]"));
        }
        if !self.terminal_box.is_inside(&self.target_box) {
            return Err(Error::param("terminal_box", "must lie inside the safe region"));
        }
        if self.grid.0 < 3 || self.grid.1 < 3 {
            return Err(Error::param("grid", "need at least 3 nodes per axis"));
        }
        if self.action_levels < 2 {
            return Err(Error::param("action_levels", "need at least 2 levels"));
        }
        if self.time_limit == 0 {
            return Err(Error::param("time_limit", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::param("gamma", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn in_target(&self, s: IntegratorState) -> bool {
        !self.target_box.contains(s)
    }

    pub fn in_terminal(&self, s: IntegratorState) -> bool {
        self.terminal_box.contains(s)
    }

    /// `a_n = (a_max - a_min) n / (A - 1) + a_min`.
    pub fn action_level(&self, n: usize) -> f64 {
        let (lo, hi) = (-self.action_bound, self.action_bound);
        (hi - lo) * n as f64 / (self.action_levels - 1) as f64 + lo
    }

    fn perturbed(&self, action: f64) -> f64 {
        if action == 0.0 {
            0.0
        } else {
            self.action_bound * action.signum()
        }
    }

    fn euler(&self, s: IntegratorState, accel: f64) -> IntegratorState {
        [s[0] + self.dt * s[1], s[1] + self.dt * accel]
    }

    pub fn grid_axes(&self) -> (Vec<f64>, Vec<f64>) {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        };
        (axis(self.grid_box.position, self.grid.0), axis(self.grid_box.velocity, self.grid.1))
    }

    /// Index of grid node `(i, j)`; the exterior state comes after all nodes.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * self.grid.1 + j
    }

    pub fn exterior_index(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    /// Coordinates of every grid node, in state-index order.
    pub fn grid_points(&self) -> Vec<IntegratorState> {
        let (ps, vs) = self.grid_axes();
        ps.iter().flat_map(|&p| vs.iter().map(move |&v| [p, v])).collect()
    }
}

/// One step of the randomized integrator from `state`.
pub fn integrator_step<R: Rng + ?Sized>(
    config: &IntegratorConfig,
    state: IntegratorState,
    action: f64,
    rng: &mut R,
) -> Result<StepResult<IntegratorState>> {
    if !(action.abs() <= config.action_bound) {
        return Err(Error::ActionOutOfRange { action, bound: config.action_bound });
    }
    let applied =
        if rng.random::<f64>() < config.perturb_prob { config.perturbed(action) } else { action };
    let next = config.euler(state, applied);
    let target_hit = config.in_target(state);
    Ok(StepResult {
        next_state: next,
        target_hit,
        done: !target_hit && config.in_terminal(next),
        truncated: false,
    })
}

/// Grid MDP for the integrator.
///
/// Each action level's two perturbation branches are enumerated exactly and
/// every continuous successor is split over its four surrounding grid nodes
/// with bilinear weights. Successors outside the grid extent go to a single
/// absorbing exterior state in `G`. Grid nodes in `G` keep their dynamics;
/// values there are pinned to 1 regardless.
pub fn discretize_integrator(config: &IntegratorConfig) -> Result<FiniteMdp> {
    config.validate()?;
    let (ps, vs) = config.grid_axes();
    let (np, nv) = config.grid;
    let num_actions = config.action_levels;
    let exterior = config.exterior_index();
    let num_states = exterior + 1;

    let mut target = vec![false; num_states];
    let mut terminal = vec![false; num_states];
    target[exterior] = true;
    for (i, &p) in ps.iter().enumerate() {
        for (j, &v) in vs.iter().enumerate() {
            let s = config.node_index(i, j);
            target[s] = config.in_target([p, v]);
            terminal[s] = !target[s] && config.in_terminal([p, v]);
        }
    }

    let (hp, hv) = (ps[1] - ps[0], vs[1] - vs[0]);
    let splat = |row: &mut Row, next: IntegratorState, weight: f64| {
        let fi = (next[0] - ps[0]) / hp;
        let fj = (next[1] - vs[0]) / hv;
        if !(0.0..=(np - 1) as f64).contains(&fi) || !(0.0..=(nv - 1) as f64).contains(&fj) {
            row.push((exterior, weight));
            return;
        }
        let i0 = (fi.floor() as usize).min(np - 2);
        let j0 = (fj.floor() as usize).min(nv - 2);
        let (di, dj) = (fi - i0 as f64, fj - j0 as f64);
        for (i, wi) in [(i0, 1.0 - di), (i0 + 1, di)] {
            for (j, wj) in [(j0, 1.0 - dj), (j0 + 1, dj)] {
                let w = weight * wi * wj;
                if w > 0.0 {
                    row.push((config.node_index(i, j), w));
                }
            }
        }
    };

    let mut rows = Vec::with_capacity(num_states * num_actions);
    for s in 0..num_states {
        let node = if s < exterior { Some([ps[s / nv], vs[s % nv]]) } else { None };
        for n in 0..num_actions {
            let mut row = Row::new();
            match node {
                Some(x) if !terminal[s] => {
                    let u = config.action_level(n);
                    let branches = [(1.0 - config.perturb_prob, u), (config.perturb_prob, config.perturbed(u))];
                    for (w, accel) in branches {
                        if w > 0.0 {
                            splat(&mut row, config.euler(x, accel), w);
                        }
                    }
                }
                _ => row.push((s, 1.0)),
            }
            rows.push(row);
        }
    }

    let mut coords: Vec<Vec<f64>> = config.grid_points().iter().map(|p| p.to_vec()).collect();
    // The exterior state sits one cell beyond the upper grid corner.
    coords.push(vec![ps[np - 1] + hp, vs[nv - 1] + hv]);
    FiniteMdp::new(num_states, num_actions, rows, target, terminal, config.gamma)?.with_coordinates(
        Coordinates { names: vec!["position".into(), "velocity".into()], values: coords },
    )
}

/// Continuous integrator with its own RNG, episode clock and reset distribution.
#[derive(Debug, Clone)]
pub struct IntegratorEnv {
    config: IntegratorConfig,
    rng: ChaCha8Rng,
    state: IntegratorState,
    t: usize,
}

impl IntegratorEnv {
    pub fn new(config: IntegratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut env = Self { config, rng: ChaCha8Rng::seed_from_u64(seed), state: [0.0; 2], t: 0 };
        env.reset();
        Ok(env)
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn state(&self) -> IntegratorState {
        self.state
    }

    pub fn reset(&mut self) -> IntegratorState {
        let b = self.config.start_box;
        self.state = [
            self.rng.random_range(b.position.0..=b.position.1),
            self.rng.random_range(b.velocity.0..=b.velocity.1),
        ];
        self.t = 0;
        self.state
    }

    /// Steps the system; reports truncation when the time limit is reached
    /// without termination or target entry. The caller resets.
    pub fn step(&mut self, action: f64) -> Result<StepResult<IntegratorState>> {
        let mut r = integrator_step(&self.config, self.state, action, &mut self.rng)?;
        self.state = r.next_state;
        self.t += 1;
        r.truncated = !r.target_hit && !r.done && self.t >= self.config.time_limit;
        Ok(r)
    }
}
