use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ::safeset::config::{EnvKind, RunConfig};
use ::safeset::lp::{solve_policy_lp, LpSense, PolicyLp};
use ::safeset::mdp::FiniteMdp;
use ::safeset::metrics::{ratio_correct, ratio_false_positive, MetricsRow, SafeSetEstimate, SafeSetSource};
use ::safeset::oracle;
use ::safeset::suite;
use ::safeset::tabular::Algo;
use ::safeset::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Finite MDP with target (unsafe) and terminal states.
#[pyclass(name = "FiniteMdp", module = "safeset", frozen)]
struct PyMdp {
    inner: FiniteMdp,
}

#[pymethods]
impl PyMdp {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        FiniteMdp::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    /// Built-in environment: `"chain"` or `"integrator"` (grid discretization).
    #[staticmethod]
    #[pyo3(signature = (env, grid=None, slip_prob=None))]
    fn builtin(env: &str, grid: Option<[usize; 2]>, slip_prob: Option<f64>) -> PyResult<Self> {
        let mut cfg = RunConfig::new(env.parse::<EnvKind>().map_err(to_py)?);
        cfg.grid = grid;
        cfg.slip_prob = slip_prob;
        cfg.validate().map_err(to_py)?;
        cfg.finite_mdp().map(|inner| Self { inner }).map_err(to_py)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn is_target(&self, s: usize) -> bool {
        s < self.inner.num_states() && self.inner.is_target(s)
    }

    fn is_terminal(&self, s: usize) -> bool {
        s < self.inner.num_states() && self.inner.is_terminal(s)
    }

    /// Successors of `(s, a)` as `(next_state, probability)` pairs.
    fn transitions(&self, s: usize, a: usize) -> PyResult<Vec<(usize, f64)>> {
        if s >= self.inner.num_states() || a >= self.inner.num_actions() {
            return Err(PyValueError::new_err("state or action out of range"));
        }
        Ok(self.inner.row(s, a).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("FiniteMdp(num_states={}, num_actions={}, gamma={})", self.num_states(), self.num_actions(), self.gamma())
    }
}

/// Minimal probability of unsafety per state.
#[pyfunction]
#[pyo3(signature = (mdp, tol=oracle::DEFAULT_TOL))]
fn optimal_unsafety(mdp: &PyMdp, tol: f64) -> PyResult<Vec<f64>> {
    oracle::optimal_unsafety(&mdp.inner, tol).map(|v| v.values).map_err(to_py)
}

/// Probability of unsafety of a stochastic policy given as one row per state.
#[pyfunction]
fn policy_unsafety(mdp: &PyMdp, policy: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let pi = ::safeset::mdp::StochasticPolicy::from_rows(policy).map_err(to_py)?;
    let (v, _) = oracle::evaluate_policy_exact(&mdp.inner, &pi).map_err(to_py)?;
    Ok(v)
}

/// Membership of `{s : V*(s) <= alpha}`.
#[pyfunction]
#[pyo3(signature = (mdp, alpha=0.2))]
fn safe_set(mdp: &PyMdp, alpha: f64) -> PyResult<Vec<bool>> {
    let v = oracle::optimal_unsafety(&mdp.inner, oracle::DEFAULT_TOL).map_err(to_py)?;
    Ok(oracle::safe_set(&v, alpha).member)
}

/// Optimizes `objective . pi` over the simplex subject to `coeffs . pi <= budget`.
#[pyfunction]
#[pyo3(signature = (objective, coeffs, budget, maximize=false))]
fn solve_lp(objective: Vec<f64>, coeffs: Vec<f64>, budget: f64, maximize: bool) -> PyResult<(Vec<f64>, f64)> {
    let sense = if maximize { LpSense::Maximize } else { LpSense::Minimize };
    let sol = solve_policy_lp(&PolicyLp::new(objective, coeffs, budget, sense)).map_err(to_py)?;
    Ok((sol.probs, sol.value))
}

/// `(r_c, r_fp)` of an estimated membership against the truth.
#[pyfunction]
fn spec_metrics(estimate: Vec<bool>, truth: Vec<bool>) -> PyResult<(f64, f64)> {
    if estimate.len() != truth.len() {
        return Err(PyValueError::new_err("estimate and truth differ in length"));
    }
    let alpha = f64::NAN;
    let e = SafeSetEstimate { member: estimate, alpha, source: SafeSetSource::Tabular };
    let t = SafeSetEstimate { member: truth, alpha, source: SafeSetSource::Oracle };
    let rc = ratio_correct(&e, &t).map_err(to_py)?;
    let rfp = ratio_false_positive(&e, &t, t.len()).map_err(to_py)?;
    Ok((rc, rfp))
}

fn row_dict(r: &MetricsRow) -> HashMap<&'static str, f64> {
    HashMap::from([
        ("iteration", r.iteration as f64),
        ("env_steps", r.env_steps as f64),
        ("r_c", r.r_c),
        ("r_fp", r.r_fp),
        ("aes", r.aes),
        ("epsilon", r.epsilon),
    ])
}

/// Trains a tabular learner and returns its metric rows.
#[pyfunction]
#[pyo3(signature = (env="chain", algo="ess", iterations=20, steps_per_iter=10_000, seed=0, alpha=0.2))]
fn train_tabular(
    py: Python<'_>,
    env: &str,
    algo: &str,
    iterations: usize,
    steps_per_iter: u64,
    seed: u64,
    alpha: f64,
) -> PyResult<Vec<HashMap<&'static str, f64>>> {
    let algo: Algo = algo.parse().map_err(to_py)?;
    let mut cfg = RunConfig::new(env.parse::<EnvKind>().map_err(to_py)?);
    cfg.alpha = alpha;
    cfg.tabular.iterations = iterations;
    cfg.tabular.steps_per_iter = steps_per_iter;
    let out = py.detach(|| suite::train(&cfg, algo, seed)).map_err(to_py)?;
    Ok(out.record.rows.iter().map(row_dict).collect())
}

#[pymodule]
#[pyo3(name = "safeset")]
fn safeset_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_function(wrap_pyfunction!(optimal_unsafety, m)?)?;
    m.add_function(wrap_pyfunction!(policy_unsafety, m)?)?;
    m.add_function(wrap_pyfunction!(safe_set, m)?)?;
    m.add_function(wrap_pyfunction!(solve_lp, m)?)?;
    m.add_function(wrap_pyfunction!(spec_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(train_tabular, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
