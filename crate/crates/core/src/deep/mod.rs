//! Toy-scale actor-critic LSS/ESS on the continuous integrator.

pub mod agent;
pub mod nn;
pub mod replay;
mod run;

pub use agent::{
    actor_objective_grad, critic_loss_grad, critic_targets, estimate_epsilon, multiplier_objective_grad,
    select_actor, update_critics, update_exploratory, update_ss_actor, update_ss_multiplier, ActorChoice,
    ActorInit, AgentBundle, Batch, DeepConfig, EpsilonAgg,
};
pub use nn::{load_networks, save_networks, Adam, Mlp, TopActivation};
pub use replay::{Experience, OuNoise, ReplayBuffer};
pub use run::{run_actor_critic, DeepRun};
