use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Adam, Mlp, TopActivation};
use super::replay::Experience;
use crate::error::{Error, Result};
use crate::tabular::Algo;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonAgg {
    Min,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorInit {
    /// Default network initialization.
    Random,
    /// Regress onto the saturated linear braking law before training.
    Brake,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepConfig {
    pub algo: Algo,
    pub alpha: f64,
    /// Environment steps.
    pub total_steps: u64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    /// Environment steps per gradient step.
    pub train_every: u64,
    /// Fraction of the environment steps during which only the critics train.
    pub warmup_frac: f64,
    /// Gradient steps between evaluations.
    pub eval_every: u64,
    /// The ground truth on the evaluation grid comes from an oracle grid
    /// refined by this factor per axis, whose nodes include the evaluation grid.
    pub truth_refine: usize,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub lr_multiplier: f64,
    pub tau: f64,
    pub replay_capacity: usize,
    pub unsafe_frac: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub epsilon_window: usize,
    pub epsilon_agg: EpsilonAgg,
    /// Initial output of the log-multiplier networks.
    pub log_lambda_init: f64,
    /// Gradient steps between refreshes of the actor snapshot used as `a_old`.
    pub snapshot_every: u64,
    pub actor_init: ActorInit,
    /// `u = -k (v + c p)`, saturated at the action bound.
    pub brake_gains: (f64, f64),
    pub pretrain_steps: usize,
    pub seed: u64,
}

impl Default for DeepConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ess,
            alpha: 0.2,
            total_steps: 200_000,
            hidden: vec![64, 64],
            batch_size: 64,
            train_every: 2,
            warmup_frac: 0.1,
            eval_every: 5000,
            truth_refine: 4,
            lr_critic: 1e-4,
            lr_actor: 2e-7,
            lr_multiplier: 1e-6,
            tau: 5e-3,
            replay_capacity: 1_000_000,
            unsafe_frac: 0.2,
            ou_theta: 0.1,
            ou_sigma: 0.2,
            epsilon_window: 100,
            epsilon_agg: EpsilonAgg::Min,
            log_lambda_init: 0.0,
            snapshot_every: 1000,
            actor_init: ActorInit::Brake,
            brake_gains: (2.0, 0.3),
            pretrain_steps: 2000,
            seed: 0,
        }
    }
}

impl DeepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.train_every == 0 || self.eval_every == 0 {
            return Err(Error::param("batch_size/train_every/eval_every", "must be positive"));
        }
        if self.truth_refine == 0 {
            return Err(Error::param("truth_refine", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::param("warmup_frac", "must lie in [0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param("tau", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.unsafe_frac) {
            return Err(Error::param("unsafe_frac", "must lie in [0, 1]"));
        }
        if self.epsilon_window == 0 || self.snapshot_every == 0 {
            return Err(Error::param("epsilon_window/snapshot_every", "must be positive"));
        }
        if !(-10.0..=6.0).contains(&self.log_lambda_init) {
            return Err(Error::param("log_lambda_init", "must lie in [-10, 6]"));
        }
        Ok(())
    }
}

/// Which actor drives the environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorChoice {
    SafetySpec,
    Exploratory,
}

/// Actor choice rule. Only ESS uses the exploratory actor: with probability
/// `max(0, 1 - 2 step / total)` the SS-actor is used, and always while the
/// episode safety is below `1 - alpha`. `u` is a uniform draw in `[0, 1)`.
pub fn select_actor(algo: Algo, step: u64, total: u64, aes: Option<f64>, alpha: f64, u: f64) -> ActorChoice {
    if algo != Algo::Ess || aes.is_some_and(|a| a < 1.0 - alpha) {
        return ActorChoice::SafetySpec;
    }
    let p_ss = if total == 0 { 1.0 } else { (1.0 - 2.0 * step as f64 / total as f64).max(0.0) };
    if u < p_ss {
        ActorChoice::SafetySpec
    } else {
        ActorChoice::Exploratory
    }
}

/// Networks, target copies, optimizers and the epsilon memory of one agent.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub ss_actor: Mlp,
    pub ss_actor_target: Mlp,
    /// Snapshot providing `a_old` for the SS multiplier update.
    pub ss_actor_old: Mlp,
    pub exp_actor: Option<Mlp>,
    pub critic_v: [Mlp; 2],
    pub critic_v_target: [Mlp; 2],
    /// Normalized hitting-time critic predicting `(1 - gamma) T`.
    pub critic_t: Mlp,
    pub critic_t_target: Mlp,
    pub lambda_s: Mlp,
    pub lambda_e: Option<Mlp>,
    epsilon_ring: VecDeque<f64>,
    epsilon_window: usize,
    epsilon_agg: EpsilonAgg,
    /// Multiplies `(position, velocity)` before they enter any network.
    pub state_scale: [f64; 2],
    pub action_bound: f64,
    opt: Optimizers,
}

#[derive(Debug, Clone)]
struct Optimizers {
    ss_actor: Adam,
    exp_actor: Option<Adam>,
    critic_v: [Adam; 2],
    critic_t: Adam,
    lambda_s: Adam,
    lambda_e: Option<Adam>,
}

impl AgentBundle {
    pub fn new<R: Rng + ?Sized>(
        config: &DeepConfig,
        state_scale: [f64; 2],
        action_bound: f64,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let sizes = |input: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(1);
            s
        };
        let ess = config.algo == Algo::Ess;
        let ss_actor = Mlp::new(&sizes(2), TopActivation::Tanh, rng)?;
        let exp_actor = if ess { Some(Mlp::new(&sizes(2), TopActivation::Tanh, rng)?) } else { None };
        let mut critic = || -> Result<Mlp> {
            let mut c = Mlp::new(&sizes(3), TopActivation::Clamp01, rng)?;
            let last = c.num_layers() - 1;
            c.fill_biases(1.0, [last]);
            Ok(c)
        };
        let critic_v = [critic()?, critic()?];
        let critic_t = Mlp::new(&sizes(3), TopActivation::Clamp01, rng)?;
        let multiplier = |rng: &mut R| -> Result<Mlp> {
            let mut m = Mlp::new(&sizes(2), TopActivation::ClampLog, rng)?;
            let last = m.num_layers() - 1;
            m.fill_biases(config.log_lambda_init, [last]);
            Ok(m)
        };
        let lambda_s = multiplier(rng)?;
        let lambda_e = if ess { Some(multiplier(rng)?) } else { None };
        let opt = Optimizers {
            ss_actor: Adam::new(ss_actor.num_params(), config.lr_actor),
            exp_actor: exp_actor.as_ref().map(|a| Adam::new(a.num_params(), config.lr_actor)),
            critic_v: [
                Adam::new(critic_v[0].num_params(), config.lr_critic),
                Adam::new(critic_v[1].num_params(), config.lr_critic),
            ],
            critic_t: Adam::new(critic_t.num_params(), config.lr_critic),
            lambda_s: Adam::new(lambda_s.num_params(), config.lr_multiplier),
            lambda_e: lambda_e.as_ref().map(|m| Adam::new(m.num_params(), config.lr_multiplier)),
        };
        Ok(Self {
            ss_actor_target: ss_actor.clone(),
            ss_actor_old: ss_actor.clone(),
            ss_actor,
            exp_actor,
            critic_v_target: critic_v.clone(),
            critic_v,
            critic_t_target: critic_t.clone(),
            critic_t,
            lambda_s,
            lambda_e,
            epsilon_ring: VecDeque::with_capacity(config.epsilon_window),
            epsilon_window: config.epsilon_window,
            epsilon_agg: config.epsilon_agg,
            state_scale,
            action_bound,
            opt,
        })
    }

    pub fn encode(&self, s: [f64; 2]) -> [f64; 2] {
        [s[0] * self.state_scale[0], s[1] * self.state_scale[1]]
    }

    pub fn encode_batch(&self, states: &[[f64; 2]]) -> Vec<f64> {
        states.iter().flat_map(|&s| self.encode(s)).collect()
    }

    /// Normalized action of the chosen actor at `s`, without noise.
    pub fn act(&self, choice: ActorChoice, s: [f64; 2]) -> f64 {
        let actor = match (choice, &self.exp_actor) {
            (ActorChoice::Exploratory, Some(e)) => e,
            _ => &self.ss_actor,
        };
        actor.predict(&self.encode(s), 1)[0]
    }

    /// Ring aggregate `m`; the Lyapunov critic is `Q_L = Q_V + m Q_T~`.
    pub fn lyapunov_weight(&self) -> f64 {
        if self.epsilon_ring.is_empty() {
            return 0.0;
        }
        match self.epsilon_agg {
            EpsilonAgg::Min => self.epsilon_ring.iter().copied().fold(f64::INFINITY, f64::min),
            EpsilonAgg::Mean => self.epsilon_ring.iter().sum::<f64>() / self.epsilon_ring.len() as f64,
        }
    }

    /// `epsilon = (1 - gamma) * m`.
    pub fn epsilon(&self, gamma: f64) -> f64 {
        (1.0 - gamma) * self.lyapunov_weight()
    }

    pub fn epsilon_memory(&self) -> &VecDeque<f64> {
        &self.epsilon_ring
    }

    fn push_epsilon(&mut self, value: f64) {
        if self.epsilon_ring.len() == self.epsilon_window {
            self.epsilon_ring.pop_front();
        }
        self.epsilon_ring.push_back(value);
    }

    /// `min_j Q_V,j(s, pi_s(s))` for encoded states.
    pub fn safety_values(&self, enc_states: &[f64]) -> Vec<f64> {
        let n = enc_states.len() / 2;
        let acts = self.ss_actor.predict(enc_states, n);
        let sa = join_state_action(enc_states, &acts);
        let q0 = self.critic_v[0].predict(&sa, n);
        let q1 = self.critic_v[1].predict(&sa, n);
        q0.iter().zip(&q1).map(|(a, b)| a.min(*b)).collect()
    }

    /// Regresses the actors onto the braking law `u = -k (v + c p)`.
    pub fn pretrain_actors<R: Rng + ?Sized>(
        &mut self,
        gains: (f64, f64),
        start_box: ([f64; 2], [f64; 2]),
        steps: usize,
        rng: &mut R,
    ) {
        const BATCH: usize = 64;
        let mut actors: Vec<&mut Mlp> = vec![&mut self.ss_actor];
        if let Some(e) = self.exp_actor.as_mut() {
            actors.push(e);
        }
        for actor in actors {
            let mut opt = Adam::new(actor.num_params(), 1e-3);
            for _ in 0..steps {
                let mut x = Vec::with_capacity(2 * BATCH);
                let mut y = Vec::with_capacity(BATCH);
                for _ in 0..BATCH {
                    let p = rng.random_range(start_box.0[0]..=start_box.1[0]);
                    let v = rng.random_range(start_box.0[1]..=start_box.1[1]);
                    let u = (-gains.0 * (v + gains.1 * p)).clamp(-self.action_bound, self.action_bound);
                    x.extend([p * self.state_scale[0], v * self.state_scale[1]]);
                    y.push(u / self.action_bound);
                }
                let tape = actor.forward(&x, BATCH);
                let d: Vec<f64> = tape
                    .raw
                    .iter()
                    .zip(&y)
                    .map(|(&r, &t)| 2.0 * (r.tanh() - t) * (1.0 - r.tanh().powi(2)) / BATCH as f64)
                    .collect();
                let mut g = vec![0.0; actor.num_params()];
                actor.backward(&tape, &d, Some(&mut g), false);
                opt.step(&mut actor.params, &g);
            }
        }
        self.ss_actor_target = self.ss_actor.clone();
        self.ss_actor_old = self.ss_actor.clone();
    }

    pub fn refresh_snapshot(&mut self) {
        self.ss_actor_old = self.ss_actor.clone();
    }

    pub fn soft_update_targets(&mut self, tau: f64) {
        self.critic_v_target[0].soft_update(&self.critic_v[0], tau);
        self.critic_v_target[1].soft_update(&self.critic_v[1], tau);
        self.critic_t_target.soft_update(&self.critic_t, tau);
        self.ss_actor_target.soft_update(&self.ss_actor, tau);
    }

    /// Named networks in a fixed order, for weight files.
    pub fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        let mut v = vec![
            ("ss_actor", &self.ss_actor),
            ("ss_actor_target", &self.ss_actor_target),
            ("critic_v1", &self.critic_v[0]),
            ("critic_v2", &self.critic_v[1]),
            ("critic_v1_target", &self.critic_v_target[0]),
            ("critic_v2_target", &self.critic_v_target[1]),
            ("critic_t", &self.critic_t),
            ("critic_t_target", &self.critic_t_target),
            ("lambda_s", &self.lambda_s),
        ];
        if let Some(e) = &self.exp_actor {
            v.push(("exp_actor", e));
        }
        if let Some(l) = &self.lambda_e {
            v.push(("lambda_e", l));
        }
        v
    }
}

/// Minibatch in network units.
#[derive(Debug, Clone)]
pub struct Batch {
    pub n: usize,
    /// `[n x 2]` encoded states.
    pub states: Vec<f64>,
    /// `[n x 3]` encoded state plus normalized action.
    pub state_actions: Vec<f64>,
    pub next_states: Vec<f64>,
    pub target_hit: Vec<bool>,
    pub done: Vec<bool>,
}

impl Batch {
    pub fn new(bundle: &AgentBundle, items: &[Experience]) -> Self {
        let states: Vec<f64> = items.iter().flat_map(|e| bundle.encode(e.state)).collect();
        let actions: Vec<f64> = items.iter().map(|e| e.action).collect();
        Self {
            n: items.len(),
            state_actions: join_state_action(&states, &actions),
            states,
            next_states: items.iter().flat_map(|e| bundle.encode(e.next_state)).collect(),
            target_hit: items.iter().map(|e| e.target_hit).collect(),
            done: items.iter().map(|e| e.done).collect(),
        }
    }
}

pub fn join_state_action(states: &[f64], actions: &[f64]) -> Vec<f64> {
    states.chunks_exact(2).zip(actions).flat_map(|(s, &a)| [s[0], s[1], a]).collect()
}

/// `(y_V, y_T~)` with `y_T~ = (1 - gamma) y_T` in the hitting-time critic's units.
pub fn critic_targets(batch: &Batch, bundle: &AgentBundle, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = batch.n;
    let next_a = bundle.ss_actor_target.predict(&batch.next_states, n);
    let sa = join_state_action(&batch.next_states, &next_a);
    let q0 = bundle.critic_v_target[0].predict(&sa, n);
    let q1 = bundle.critic_v_target[1].predict(&sa, n);
    let qt = bundle.critic_t_target.predict(&sa, n);
    let mut y_v = Vec::with_capacity(n);
    let mut y_t = Vec::with_capacity(n);
    for i in 0..n {
        if batch.target_hit[i] {
            y_v.push(1.0);
            y_t.push(0.0);
        } else if batch.done[i] {
            y_v.push(0.0);
            y_t.push(1.0 - gamma);
        } else {
            y_v.push(gamma * q0[i].min(q1[i]));
            y_t.push((1.0 - gamma) + gamma * qt[i]);
        }
    }
    (y_v, y_t)
}

/// Mean squared residual of the raw critic head and its parameter gradient.
pub fn critic_loss_grad(critic: &Mlp, inputs: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = targets.len();
    let tape = critic.forward(inputs, n);
    let res: Vec<f64> = tape.raw.iter().zip(targets).map(|(q, y)| q - y).collect();
    let loss = res.iter().map(|r| r * r).sum::<f64>() / n as f64;
    let d: Vec<f64> = res.iter().map(|r| 2.0 * r / n as f64).collect();
    let mut g = vec![0.0; critic.num_params()];
    critic.backward(&tape, &d, Some(&mut g), false);
    (loss, g)
}

/// One Adam step on each critic; returns `(mean Q_V loss, Q_T loss)`.
pub fn update_critics(batch: &Batch, bundle: &mut AgentBundle, gamma: f64) -> (f64, f64) {
    let (y_v, y_t) = critic_targets(batch, bundle, gamma);
    let mut loss_v = 0.0;
    for j in 0..2 {
        let (loss, g) = critic_loss_grad(&bundle.critic_v[j], &batch.state_actions, &y_v);
        bundle.opt.critic_v[j].step(&mut bundle.critic_v[j].params, &g);
        loss_v += 0.5 * loss;
    }
    let (loss_t, g) = critic_loss_grad(&bundle.critic_t, &batch.state_actions, &y_t);
    bundle.opt.critic_t.step(&mut bundle.critic_t.params, &g);
    (loss_v, loss_t)
}

/// `J = mean_i [w_v,i Q_V(s_i, a_i) + w_t,i Q_T~(s_i, a_i)]` with `a_i = actor(s_i)`,
/// through the clamped critic heads, and its gradient w.r.t. the actor.
pub fn actor_objective_grad(
    actor: &Mlp,
    critic_v: &Mlp,
    critic_t: &Mlp,
    states: &[f64],
    w_v: &[f64],
    w_t: &[f64],
) -> (f64, Vec<f64>) {
    let n = w_v.len();
    let a_tape = actor.forward(states, n);
    let acts: Vec<f64> = a_tape.raw.iter().map(|r| r.tanh()).collect();
    let sa = join_state_action(states, &acts);
    let v_tape = critic_v.forward(&sa, n);
    let t_tape = critic_t.forward(&sa, n);
    let (top_v, top_t) = (critic_v.top(), critic_t.top());
    let j = (0..n)
        .map(|i| w_v[i] * top_v.apply(v_tape.raw[i]) + w_t[i] * top_t.apply(t_tape.raw[i]))
        .sum::<f64>()
        / n as f64;
    let dv: Vec<f64> = (0..n).map(|i| w_v[i] * top_v.derivative(v_tape.raw[i]) / n as f64).collect();
    let dt: Vec<f64> = (0..n).map(|i| w_t[i] * top_t.derivative(t_tape.raw[i]) / n as f64).collect();
    let gv = critic_v.backward(&v_tape, &dv, None, true).expect("input gradient");
    let gt = critic_t.backward(&t_tape, &dt, None, true).expect("input gradient");
    let d_raw: Vec<f64> =
        (0..n).map(|i| (gv[3 * i + 2] + gt[3 * i + 2]) * (1.0 - acts[i] * acts[i])).collect();
    let mut g = vec![0.0; actor.num_params()];
    actor.backward(&a_tape, &d_raw, Some(&mut g), false);
    (j, g)
}

/// `J = mean_i lambda(s_i) r_i` with `lambda = exp(clamped log-output)`, and its gradient.
pub fn multiplier_objective_grad(net: &Mlp, states: &[f64], residual: &[f64]) -> (f64, Vec<f64>) {
    let n = residual.len();
    let tape = net.forward(states, n);
    let top = net.top();
    let lam: Vec<f64> = tape.raw.iter().map(|&r| top.apply(r).exp()).collect();
    let j = lam.iter().zip(residual).map(|(l, r)| l * r).sum::<f64>() / n as f64;
    let d: Vec<f64> = (0..n).map(|i| lam[i] * top.derivative(tape.raw[i]) * residual[i] / n as f64).collect();
    let mut g = vec![0.0; net.num_params()];
    net.backward(&tape, &d, Some(&mut g), false);
    (j, g)
}

fn lambdas(net: &Mlp, states: &[f64], n: usize) -> Vec<f64> {
    net.predict(states, n).into_iter().map(f64::exp).collect()
}

/// Clamped `Q_L = Q_V + m Q_T~` at the given actions.
fn lyapunov_values(bundle: &AgentBundle, states: &[f64], actions: &[f64]) -> Vec<f64> {
    let n = actions.len();
    let sa = join_state_action(states, actions);
    let m = bundle.lyapunov_weight();
    let qv = bundle.critic_v[0].predict(&sa, n);
    let qt = bundle.critic_t.predict(&sa, n);
    qv.iter().zip(&qt).map(|(v, t)| v + m * t).collect()
}

fn norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Descent on `Q_V + lambda_s Q_L` for the SS-actor; `lambda_s` is taken as 0
/// when `fixed_zero`. Returns the gradient norm.
pub fn update_ss_actor(batch: &Batch, bundle: &mut AgentBundle, fixed_zero: bool) -> f64 {
    let n = batch.n;
    let lam = if fixed_zero { vec![0.0; n] } else { lambdas(&bundle.lambda_s, &batch.states, n) };
    let m = bundle.lyapunov_weight();
    let w_v: Vec<f64> = lam.iter().map(|l| 1.0 + l).collect();
    let w_t: Vec<f64> = lam.iter().map(|l| l * m).collect();
    let (_, g) =
        actor_objective_grad(&bundle.ss_actor, &bundle.critic_v[0], &bundle.critic_t, &batch.states, &w_v, &w_t);
    bundle.opt.ss_actor.step(&mut bundle.ss_actor.params, &g);
    norm(&g)
}

/// Ascent on `lambda_s(s) (Q_L(s, a) - epsilon - Q_L(s, a_old))`; returns the gradient norm.
pub fn update_ss_multiplier(batch: &Batch, bundle: &mut AgentBundle, gamma: f64) -> f64 {
    let n = batch.n;
    let a = bundle.ss_actor.predict(&batch.states, n);
    let a_old = bundle.ss_actor_old.predict(&batch.states, n);
    let eps = bundle.epsilon(gamma);
    let l_new = lyapunov_values(bundle, &batch.states, &a);
    let l_old = lyapunov_values(bundle, &batch.states, &a_old);
    let r: Vec<f64> = (0..n).map(|i| l_new[i] - eps - l_old[i]).collect();
    let (_, g) = multiplier_objective_grad(&bundle.lambda_s, &batch.states, &r);
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    bundle.opt.lambda_s.step(&mut bundle.lambda_s.params, &neg);
    norm(&g)
}

/// Ascent on `Q_V - lambda_e Q_L` for the exploratory actor, then ascent on
/// `lambda_e(s) (Q_L(s, a_exp) - epsilon - Q_L(s, a_s))`. Returns both gradient norms.
pub fn update_exploratory(batch: &Batch, bundle: &mut AgentBundle, gamma: f64) -> Result<(f64, f64)> {
    let (Some(_), Some(_)) = (&bundle.exp_actor, &bundle.lambda_e) else {
        return Err(Error::param("algo", "exploratory update needs an ESS agent"));
    };
    let n = batch.n;
    let m = bundle.lyapunov_weight();
    let lam = lambdas(bundle.lambda_e.as_ref().unwrap(), &batch.states, n);
    let w_v: Vec<f64> = lam.iter().map(|l| -(1.0 - l)).collect();
    let w_t: Vec<f64> = lam.iter().map(|l| l * m).collect();
    let actor = bundle.exp_actor.as_ref().unwrap();
    let (_, g) = actor_objective_grad(actor, &bundle.critic_v[0], &bundle.critic_t, &batch.states, &w_v, &w_t);
    let opt = bundle.opt.exp_actor.as_mut().expect("ESS optimizer");
    opt.step(&mut bundle.exp_actor.as_mut().unwrap().params, &g);
    let actor_norm = norm(&g);

    let a_exp = bundle.exp_actor.as_ref().unwrap().predict(&batch.states, n);
    let a_s = bundle.ss_actor.predict(&batch.states, n);
    let eps = bundle.epsilon(gamma);
    let l_exp = lyapunov_values(bundle, &batch.states, &a_exp);
    let l_s = lyapunov_values(bundle, &batch.states, &a_s);
    let r: Vec<f64> = (0..n).map(|i| l_exp[i] - eps - l_s[i]).collect();
    let net = bundle.lambda_e.as_ref().unwrap();
    let (_, g) = multiplier_objective_grad(net, &batch.states, &r);
    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
    let opt = bundle.opt.lambda_e.as_mut().expect("ESS optimizer");
    opt.step(&mut bundle.lambda_e.as_mut().unwrap().params, &neg);
    Ok((actor_norm, norm(&g)))
}

/// Pushes `max {alpha - V(s) : V(s) <= alpha}` over the trajectory (0 if no
/// state qualifies) into the epsilon memory and returns the pushed value.
pub fn estimate_epsilon(bundle: &mut AgentBundle, trajectory: &[[f64; 2]], alpha: f64) -> f64 {
    let enc = bundle.encode_batch(trajectory);
    let v = bundle.safety_values(&enc);
    let slack = v.iter().filter(|&&x| x <= alpha).map(|x| alpha - x).fold(0.0, f64::max);
    bundle.push_epsilon(slack);
    slack
}
