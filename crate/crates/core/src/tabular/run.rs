use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    auxiliary_cost_from_tables, greedy_policy, improve_exploratory_policy, improve_ss_policy,
    q_update, QTables, Transition,
};
use crate::envs::TabularEnv;
use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, StochasticPolicy};
use crate::metrics::{
    ratio_correct, ratio_false_positive, EpisodeLog, MetricsRow, SafeSetEstimate, SafeSetSource,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Baseline,
    Lss,
    Ess,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Baseline => "baseline",
            Algo::Lss => "lss",
            Algo::Ess => "ess",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Algo::Baseline),
            "lss" => Ok(Algo::Lss),
            "ess" => Ok(Algo::Ess),
            _ => Err(Error::param("algo", format!("unknown algorithm {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TabularConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub steps_per_iter: u64,
    pub time_limit: usize,
    pub seed: u64,
    /// Initial epsilon-greedy weight of the behavior policy.
    pub noise: f64,
    /// Fraction of training after which the behavior noise reaches 0.
    pub noise_anneal: f64,
    /// Lower end of the uniform `q_v` initialization.
    pub init_low: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            iterations: 20,
            steps_per_iter: 10_000,
            time_limit: 1000,
            seed: 0,
            noise: 0.05,
            noise_anneal: 2.0 / 3.0,
            init_low: 0.99,
        }
    }
}

impl TabularConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::param("noise", "must lie in [0, 1]"));
        }
        if !(self.noise_anneal > 0.0) {
            return Err(Error::param("noise_anneal", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.init_low) {
            return Err(Error::param("init_low", "must lie in [0, 1]"));
        }
        if self.time_limit == 0 {
            return Err(Error::param("time_limit", "must be positive"));
        }
        Ok(())
    }

    fn noise_at(&self, step: u64, total: u64) -> f64 {
        let horizon = self.noise_anneal * total as f64;
        if horizon <= 0.0 {
            return 0.0;
        }
        self.noise * (1.0 - step as f64 / horizon).max(0.0)
    }
}

/// Learner state after an improvement sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub ss_policy: StochasticPolicy,
    pub exploratory_policy: Option<StochasticPolicy>,
    pub tables: QTables,
    pub epsilon: f64,
    pub iteration: usize,
}

impl IterationState {
    /// Estimated safe set `{s : sum_a pi_s(a|s) q_v(s,a) <= alpha}` over all states.
    pub fn safe_set(&self, alpha: f64) -> SafeSetEstimate {
        let (v, _) = self.tables.state_values(&self.ss_policy);
        SafeSetEstimate::from_values(&v, alpha, SafeSetSource::Tabular)
    }
}

#[derive(Debug, Clone)]
pub struct TabularRun {
    pub rows: Vec<MetricsRow>,
    pub state: IterationState,
}

struct Evaluator {
    mask: Vec<bool>,
    truth: SafeSetEstimate,
    alpha: f64,
}

impl Evaluator {
    fn row(&self, st: &IterationState, env_steps: u64, log: &EpisodeLog) -> Result<MetricsRow> {
        let est = st.safe_set(self.alpha).restrict(&self.mask);
        Ok(MetricsRow {
            iteration: st.iteration,
            env_steps,
            r_c: ratio_correct(&est, &self.truth)?,
            r_fp: ratio_false_positive(&est, &self.truth, est.len())?,
            aes: log.episode_safety().unwrap_or(f64::NAN),
            epsilon: st.epsilon,
        })
    }
}

/// Runs one tabular learner on `mdp` for `config.iterations` improvement
/// sweeps, each after `config.steps_per_iter` environment steps.
///
/// `truth` is the oracle's `S*(alpha)` membership over all states; metrics are
/// computed over the states outside `G`. The returned rows start with the
/// untrained state at iteration 0.
pub fn run_tabular(mdp: &FiniteMdp, truth: &[bool], algo: Algo, config: &TabularConfig) -> Result<TabularRun> {
    config.validate()?;
    mdp.check_values(&vec![0.0; truth.len()])?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mask: Vec<bool> = (0..ns).map(|s| !mdp.is_target(s)).collect();
    let eval = Evaluator {
        truth: SafeSetEstimate { member: truth.to_vec(), alpha: config.alpha, source: SafeSetSource::Oracle }
            .restrict(&mask),
        mask,
        alpha: config.alpha,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut env = TabularEnv::new(mdp, config.time_limit, config.seed)?;
    let mut st = IterationState {
        ss_policy: StochasticPolicy::uniform(ns, na),
        exploratory_policy: (algo == Algo::Ess).then(|| StochasticPolicy::uniform(ns, na)),
        tables: QTables::random(ns, na, config.init_low, &mut rng),
        epsilon: 0.0,
        iteration: 0,
    };
    let mut log = EpisodeLog::new();
    let mut rows = vec![eval.row(&st, 0, &log)?];
    let total = config.steps_per_iter * config.iterations as u64;
    let mut env_steps = 0u64;
    let gamma = mdp.gamma();

    for k in 1..=config.iterations {
        for _ in 0..config.steps_per_iter {
            let s = env.state();
            let behavior = st.exploratory_policy.as_ref().unwrap_or(&st.ss_policy);
            let a = if rng.random::<f64>() < config.noise_at(env_steps, total) {
                rng.random_range(0..na)
            } else {
                behavior.sample_with(s, rng.random())
            };
            let r = env.step(a)?;
            env_steps += 1;
            let tr = Transition { state: s, action: a, target_hit: r.target_hit, next_state: r.next_state, done: r.done };
            let tau = st.tables.learning_rate(s, a);
            q_update(&mut st.tables, &tr, &st.ss_policy, tau, gamma)?;
            if r.done {
                st.tables.clear_state(r.next_state);
            }
            if r.episode_over() {
                log.record(!r.target_hit);
                env.reset();
            }
        }

        st.iteration = k;
        match algo {
            Algo::Baseline => {
                st.ss_policy = greedy_policy(mdp, &st.tables, &st.ss_policy)?;
            }
            Algo::Lss | Algo::Ess => {
                st.epsilon = auxiliary_cost_from_tables(&st.tables, &st.ss_policy, config.alpha, &eval.mask);
                if algo == Algo::Ess {
                    st.exploratory_policy =
                        Some(improve_exploratory_policy(mdp, &st.tables, st.epsilon, &st.ss_policy)?);
                }
                st.ss_policy = improve_ss_policy(mdp, &st.tables, st.epsilon, &st.ss_policy)?;
            }
        }
        rows.push(eval.row(&st, env_steps, &log)?);
    }
    Ok(TabularRun { rows, state: st })
}
