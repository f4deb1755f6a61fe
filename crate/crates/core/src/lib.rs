//! Probabilistic safe sets for finite and continuous MDPs.

pub mod config;
pub mod deep;
pub mod envs;
pub mod error;
pub mod io;
pub mod lp;
pub mod mdp;
pub mod metrics;
pub mod oracle;
pub mod suite;
pub mod tabular;

pub use error::{Error, Result};
