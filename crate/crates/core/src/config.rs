//! TOML run and suite configuration.
//!
//! ```toml
//! env = "integrator"
//! dt = 0.1
//! grid = [41, 41]
//! time_limit = 1000
//! gamma = 0.9999
//! seed = 0
//! algos = ["baseline", "ess"]
//!
//! [tabular]
//! iterations = 50
//! steps_per_iter = 100000
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::deep::DeepConfig;
use crate::envs::{discretize_integrator, ChainWorldConfig, IntegratorConfig};
use crate::error::{Error, Result};
use crate::mdp::FiniteMdp;
use crate::tabular::{Algo, TabularConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "chain")]
    Chain,
    #[serde(rename = "integrator")]
    Integrator,
    #[serde(rename = "integrator-cont")]
    IntegratorCont,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Chain => "chain",
            EnvKind::Integrator => "integrator",
            EnvKind::IntegratorCont => "integrator-cont",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(EnvKind::Chain),
            "integrator" => Ok(EnvKind::Integrator),
            "integrator-cont" => Ok(EnvKind::IntegratorCont),
            _ => Err(Error::param("env", format!("unknown environment {s:?}"))),
        }
    }
}

/// Learning mode: tabular Q-learning on a finite MDP or actor-critic on the
/// continuous integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Tabular,
    Deep,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tabular" => Ok(Mode::Tabular),
            "deep" => Ok(Mode::Deep),
            _ => Err(Error::param("mode", format!("unknown mode {s:?}"))),
        }
    }
}

/// One config file shared by `train` and `suite`. Top-level environment keys
/// override the defaults of the chosen environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvKind,
    pub dt: Option<f64>,
    pub grid: Option<[usize; 2]>,
    pub slip_prob: Option<f64>,
    pub time_limit: Option<usize>,
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub mode: Option<Mode>,
    #[serde(default = "default_algos")]
    pub algos: Vec<Algo>,
    pub num_states: Option<usize>,
    #[serde(default)]
    pub tabular: TabularConfig,
    #[serde(default)]
    pub deep: DeepConfig,
}

fn default_alpha() -> f64 {
    0.2
}

fn default_algos() -> Vec<Algo> {
    vec![Algo::Baseline, Algo::Ess]
}

impl RunConfig {
    pub fn new(env: EnvKind) -> Self {
        Self {
            env,
            dt: None,
            grid: None,
            slip_prob: None,
            time_limit: None,
            gamma: None,
            seed: 0,
            alpha: default_alpha(),
            mode: None,
            algos: default_algos(),
            num_states: None,
            tabular: TabularConfig::default(),
            deep: DeepConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Tabular for the finite environments, deep for `integrator-cont`, unless set.
    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or(match self.env {
            EnvKind::IntegratorCont => Mode::Deep,
            _ => Mode::Tabular,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (self.env, self.mode()) {
            (EnvKind::IntegratorCont, Mode::Tabular) => {
                return Err(Error::param("mode", "integrator-cont needs the deep mode"));
            }
            (EnvKind::Chain, Mode::Deep) => return Err(Error::param("mode", "deep mode needs an integrator")),
            _ => {}
        }
        if self.algos.is_empty() {
            return Err(Error::param("algos", "must list at least one algorithm"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param("alpha", "must lie in (0, 1)"));
        }
        match self.env {
            EnvKind::Chain => self.chain_config().validate(),
            _ => self.integrator_config().validate(),
        }
    }

    pub fn chain_config(&self) -> ChainWorldConfig {
        let mut c = ChainWorldConfig::default();
        if let Some(n) = self.num_states {
            c.num_states = n;
        }
        if let Some(p) = self.slip_prob {
            c.slip_prob = p;
        }
        if let Some(t) = self.time_limit {
            c.time_limit = t;
        }
        if let Some(g) = self.gamma {
            c.gamma = g;
        }
        c
    }

    pub fn integrator_config(&self) -> IntegratorConfig {
        let mut c = IntegratorConfig::default();
        if let Some(dt) = self.dt {
            c.dt = dt;
        }
        if let Some([nx, nv]) = self.grid {
            c.grid = (nx, nv);
        }
        if let Some(t) = self.time_limit {
            c.time_limit = t;
        }
        if let Some(g) = self.gamma {
            c.gamma = g;
        }
        c
    }

    /// Episode time limit of the finite environment.
    pub fn time_limit(&self) -> usize {
        match self.env {
            EnvKind::Chain => self.chain_config().time_limit,
            _ => self.integrator_config().time_limit,
        }
    }

    /// The finite MDP for tabular work.
    pub fn finite_mdp(&self) -> Result<FiniteMdp> {
        match self.env {
            EnvKind::Chain => self.chain_config().to_mdp(),
            EnvKind::Integrator | EnvKind::IntegratorCont => discretize_integrator(&self.integrator_config()),
        }
    }

    pub fn tabular_config(&self, algo_seed: u64) -> TabularConfig {
        TabularConfig { alpha: self.alpha, time_limit: self.time_limit(), seed: algo_seed, ..self.tabular.clone() }
    }

    pub fn deep_config(&self, algo: Algo, seed: u64) -> DeepConfig {
        DeepConfig { algo, alpha: self.alpha, seed, ..self.deep.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_top_level_keys() {
        let cfg = RunConfig::from_toml(
            r#"
            env = "integrator"
            dt = 0.05
            grid = [21, 31]
            time_limit = 500
            gamma = 0.99
            seed = 7
            algos = ["lss"]
            [tabular]
            iterations = 3
            "#,
        )
        .unwrap();
        let ic = cfg.integrator_config();
        assert_eq!((ic.dt, ic.grid, ic.time_limit, ic.gamma), (0.05, (21, 31), 500, 0.99));
        assert_eq!(cfg.algos, vec![Algo::Lss]);
        assert_eq!(cfg.tabular.iterations, 3);
        assert_eq!(cfg.tabular_config(7).time_limit, 500);
        assert_eq!(cfg.mode(), Mode::Tabular);
    }

    #[test]
    fn chain_slip_override() {
        let cfg = RunConfig::from_toml("env = \"chain\"\nslip_prob = 0.3\n").unwrap();
        assert_eq!(cfg.chain_config().slip_prob, 0.3);
        assert_eq!(cfg.finite_mdp().unwrap().num_states(), 5);
    }

    #[test]
    fn rejects_bad_combinations() {
        assert!(RunConfig::from_toml("env = \"chain\"\nmode = \"deep\"\n").is_err());
        assert!(RunConfig::from_toml("env = \"integrator\"\ngrid = [2, 41]\n").is_err());
        assert!(RunConfig::from_toml("env = \"moon\"\n").is_err());
        assert!(RunConfig::from_toml("env = \"chain\"\nfoo = 1\n").is_err());
    }
}
