use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{
    estimate_epsilon, select_actor, update_critics, update_exploratory, update_ss_actor,
    update_ss_multiplier, ActorInit, AgentBundle, Batch, DeepConfig,
};
use super::replay::{Experience, OuNoise, ReplayBuffer};
use crate::envs::{discretize_integrator, IntegratorConfig, IntegratorEnv};
use crate::error::Result;
use crate::metrics::{ratio_correct, ratio_false_positive, EpisodeLog, MetricsRow, SafeSetEstimate, SafeSetSource};
use crate::oracle::{optimal_unsafety, DEFAULT_TOL};
use crate::tabular::Algo;

#[derive(Debug, Clone)]
pub struct DeepRun {
    pub rows: Vec<MetricsRow>,
    pub bundle: AgentBundle,
    /// Environment steps of the critics-only phase.
    pub warmup_steps: u64,
    /// Evaluation grid (non-target grid nodes) and the final membership on it.
    pub grid: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    pub truth: Vec<bool>,
}

impl DeepRun {
    pub fn estimate(&self, alpha: f64) -> SafeSetEstimate {
        SafeSetEstimate::from_values(&self.values, alpha, SafeSetSource::Deep)
    }
}

struct Evaluator {
    grid: Vec<[f64; 2]>,
    truth: SafeSetEstimate,
    alpha: f64,
}

impl Evaluator {
    fn new(env: &IntegratorConfig, alpha: f64, refine: usize) -> Result<Self> {
        let mdp = discretize_integrator(env)?;
        let fine_env = IntegratorConfig {
            grid: ((env.grid.0 - 1) * refine + 1, (env.grid.1 - 1) * refine + 1),
            ..env.clone()
        };
        let fine = optimal_unsafety(&discretize_integrator(&fine_env)?, DEFAULT_TOL)?.values;
        let points = env.grid_points();
        let keep: Vec<usize> = (0..points.len()).filter(|&s| !mdp.is_target(s)).collect();
        let fine_value = |s: usize| fine[fine_env.node_index(s / env.grid.1 * refine, s % env.grid.1 * refine)];
        Ok(Self {
            grid: keep.iter().map(|&s| points[s]).collect(),
            truth: SafeSetEstimate {
                member: keep.iter().map(|&s| fine_value(s) <= alpha).collect(),
                alpha,
                source: SafeSetSource::Oracle,
            },
            alpha,
        })
    }

    fn values(&self, bundle: &AgentBundle) -> Vec<f64> {
        bundle.safety_values(&bundle.encode_batch(&self.grid))
    }

    fn row(&self, bundle: &AgentBundle, iteration: usize, env_steps: u64, log: &EpisodeLog, gamma: f64) -> Result<MetricsRow> {
        let est = SafeSetEstimate::from_values(&self.values(bundle), self.alpha, SafeSetSource::Deep);
        Ok(MetricsRow {
            iteration,
            env_steps,
            r_c: ratio_correct(&est, &self.truth)?,
            r_fp: ratio_false_positive(&est, &self.truth, est.len())?,
            aes: log.episode_safety().unwrap_or(f64::NAN),
            epsilon: bundle.epsilon(gamma),
        })
    }
}

/// Actor-critic LSS/ESS (or the unconstrained baseline) on the continuous integrator.
///
/// Ground truth is `S*(alpha)` of the discretized oracle on a grid refined by
/// `truth_refine`, read off at the evaluation nodes. Rows are emitted at gradient step 0, every `eval_every` gradient steps,
/// at the end of the critics-only warmup, and at the end of the run. The
/// `iteration` column counts gradient steps.
pub fn run_actor_critic(env_config: &IntegratorConfig, config: &DeepConfig) -> Result<DeepRun> {
    config.validate()?;
    let eval = Evaluator::new(env_config, config.alpha, config.truth_refine)?;
    let gamma = env_config.gamma;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let g = env_config.grid_box;
    let scale = [1.0 / g.position.1.abs().max(g.position.0.abs()), 1.0 / g.velocity.1.abs().max(g.velocity.0.abs())];
    let mut bundle = AgentBundle::new(config, scale, env_config.action_bound, &mut rng)?;
    if config.actor_init == ActorInit::Brake {
        let b = env_config.start_box;
        let start = ([b.position.0, b.velocity.0], [b.position.1, b.velocity.1]);
        bundle.pretrain_actors(config.brake_gains, start, config.pretrain_steps, &mut rng);
    }

    let mut env = IntegratorEnv::new(env_config.clone(), config.seed)?;
    let mut replay = ReplayBuffer::new(config.replay_capacity)?;
    let mut ou = OuNoise::new(1, config.ou_theta, config.ou_sigma);
    let mut log = EpisodeLog::new();
    let mut trajectory: Vec<[f64; 2]> = Vec::new();
    let warmup_steps = (config.warmup_frac * config.total_steps as f64).round() as u64;
    let total_grad = config.total_steps / config.train_every;
    let mut grad_steps = 0u64;
    let mut rows = vec![eval.row(&bundle, 0, 0, &log, gamma)?];
    let mut state = env.state();

    for step in 0..config.total_steps {
        let choice = select_actor(config.algo, grad_steps, total_grad, log.episode_safety(), config.alpha, rng.random());
        let noise = ou.sample(&mut rng)[0];
        let a = (bundle.act(choice, state) + noise).clamp(-1.0, 1.0);
        let r = env.step(a * env_config.action_bound)?;
        replay.push(Experience { state, action: a, target_hit: r.target_hit, next_state: r.next_state, done: r.done });
        trajectory.push(state);
        state = r.next_state;
        if r.episode_over() {
            log.record(!r.target_hit);
            if config.algo != Algo::Baseline {
                estimate_epsilon(&mut bundle, &trajectory, config.alpha);
            }
            trajectory.clear();
            ou.reset();
            state = env.reset();
        }

        let env_steps = step + 1;
        if env_steps % config.train_every == 0 && replay.len() >= config.batch_size {
            let items = replay.sample(config.batch_size, config.unsafe_frac, &mut rng);
            let batch = Batch::new(&bundle, &items);
            update_critics(&batch, &mut bundle, gamma);
            if env_steps > warmup_steps {
                match config.algo {
                    Algo::Baseline => {
                        update_ss_actor(&batch, &mut bundle, true);
                    }
                    Algo::Lss => {
                        update_ss_actor(&batch, &mut bundle, false);
                        update_ss_multiplier(&batch, &mut bundle, gamma);
                    }
                    Algo::Ess => {
                        update_ss_actor(&batch, &mut bundle, true);
                        update_exploratory(&batch, &mut bundle, gamma)?;
                    }
                }
            }
            bundle.soft_update_targets(config.tau);
            grad_steps += 1;
            if grad_steps % config.snapshot_every == 0 {
                bundle.refresh_snapshot();
            }
            if grad_steps % config.eval_every == 0 {
                rows.push(eval.row(&bundle, grad_steps as usize, env_steps, &log, gamma)?);
            }
        }
        let at_end = env_steps == config.total_steps;
        if (env_steps == warmup_steps || at_end) && rows.last().is_some_and(|r| r.env_steps != env_steps) {
            rows.push(eval.row(&bundle, grad_steps as usize, env_steps, &log, gamma)?);
        }
    }
    let values = eval.values(&bundle);
    Ok(DeepRun { rows, bundle, warmup_steps, grid: eval.grid, values, truth: eval.truth.member })
}
