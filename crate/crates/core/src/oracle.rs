//! Exact dynamic-programming ground truth on a known [`FiniteMdp`].
//!
//! All sweeps are Jacobi style: each sweep reads only the previous iterate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, StochasticPolicy};
use crate::metrics::{SafeSetEstimate, SafeSetSource};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 1_000_000;

/// Probability of unsafety on the `x = 1` slice.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
    pub sweeps: usize,
}

/// Discounted expected steps until the first visit to `G` or a terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTimeTable {
    pub times: Vec<f64>,
    pub residual: f64,
    pub sweeps: usize,
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::param("tol", format!("{tol} must be positive")))
    }
}

fn boundary_values(mdp: &FiniteMdp) -> Vec<f64> {
    (0..mdp.num_states()).map(|s| if mdp.is_target(s) { 1.0 } else { 0.0 }).collect()
}

/// Runs `update` on interior states until the sup-norm change drops below
/// `tol` and so does the geometric tail `r / (1 - r)` of it, where `r` is
/// the ratio of the last two changes.
fn iterate<F>(mdp: &FiniteMdp, init: Vec<f64>, tol: f64, update: F) -> (Vec<f64>, f64, usize)
where
    F: Fn(usize, &[f64]) -> f64,
{
    let interior: Vec<usize> = (0..mdp.num_states()).filter(|&s| mdp.is_interior(s)).collect();
    let mut cur = init;
    let mut next = cur.clone();
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let prev = residual;
        residual = 0.0;
        for &s in &interior {
            let v = update(s, &cur);
            residual = residual.max((v - cur[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut cur, &mut next);
        sweeps += 1;
        if residual < tol {
            let r = residual / prev;
            if residual == 0.0 || (r < 1.0 && residual * r / (1.0 - r) < tol) {
                break;
            }
        }
    }
    (cur, residual, sweeps)
}

/// Minimal probability of unsafety `V*` by value iteration.
pub fn optimal_unsafety(mdp: &FiniteMdp, tol: f64) -> Result<ValueTable> {
    check_tol(tol)?;
    let gamma = mdp.gamma();
    let (values, residual, sweeps) = iterate(mdp, boundary_values(mdp), tol, |s, v| {
        let best = (0..mdp.num_actions())
            .map(|a| mdp.expected(s, a, v))
            .fold(f64::INFINITY, f64::min);
        gamma * best
    });
    Ok(ValueTable { values, residual, sweeps })
}

/// Probability of unsafety `V^pi` by iterative policy evaluation.
pub fn policy_unsafety(mdp: &FiniteMdp, policy: &StochasticPolicy, tol: f64) -> Result<ValueTable> {
    check_tol(tol)?;
    mdp.check_policy(policy)?;
    let gamma = mdp.gamma();
    let (values, residual, sweeps) =
        iterate(mdp, boundary_values(mdp), tol, |s, v| gamma * policy_backup(mdp, policy, s, v));
    Ok(ValueTable { values, residual, sweeps })
}

/// First-hitting time `T^pi`: zero on `G` and terminal states, `1 + gamma E T(s')` elsewhere.
pub fn policy_hitting_time(
    mdp: &FiniteMdp,
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<HittingTimeTable> {
    check_tol(tol)?;
    mdp.check_policy(policy)?;
    let gamma = mdp.gamma();
    let (times, residual, sweeps) = iterate(mdp, vec![0.0; mdp.num_states()], tol, |s, t| {
        1.0 + gamma * policy_backup(mdp, policy, s, t)
    });
    Ok(HittingTimeTable { times, residual, sweeps })
}

fn policy_backup(mdp: &FiniteMdp, policy: &StochasticPolicy, s: usize, v: &[f64]) -> f64 {
    policy
        .row(s)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(a, &p)| p * mdp.expected(s, a, v))
        .sum()
}

/// Exact `(V^pi, T^pi)` by solving `(I - gamma P_pi) x = b` on interior states.
///
/// Fails with [`Error::Singular`] when some interior state never reaches `G`
/// or a terminal state and `gamma = 1`.
pub fn evaluate_policy_exact(
    mdp: &FiniteMdp,
    policy: &StochasticPolicy,
) -> Result<(Vec<f64>, Vec<f64>)> {
    mdp.check_policy(policy)?;
    let n = mdp.num_states();
    let gamma = mdp.gamma();
    let interior: Vec<usize> = (0..n).filter(|&s| mdp.is_interior(s)).collect();
    let mut slot = vec![usize::MAX; n];
    for (i, &s) in interior.iter().enumerate() {
        slot[s] = i;
    }
    let m = interior.len();
    let mut values = boundary_values(mdp);
    let mut times = vec![0.0; n];
    if m == 0 {
        return Ok((values, times));
    }
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut rhs_v = DVector::<f64>::zeros(m);
    let rhs_t = DVector::<f64>::from_element(m, 1.0);
    for (i, &s) in interior.iter().enumerate() {
        for (act, &p_act) in policy.row(s).iter().enumerate() {
            if p_act == 0.0 {
                continue;
            }
            for &(next, p) in mdp.row(s, act) {
                let w = gamma * p_act * p;
                if mdp.is_interior(next) {
                    a[(i, slot[next])] -= w;
                } else if mdp.is_target(next) {
                    rhs_v[i] += w;
                }
            }
        }
    }
    let lu = a.lu();
    let sol_v = lu.solve(&rhs_v).ok_or(Error::Singular("policy evaluation"))?;
    let sol_t = lu.solve(&rhs_t).ok_or(Error::Singular("hitting time"))?;
    if sol_v.iter().chain(sol_t.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Singular("policy evaluation"));
    }
    for (i, &s) in interior.iter().enumerate() {
        values[s] = sol_v[i];
        times[s] = sol_t[i];
    }
    Ok((values, times))
}

/// Exact state-action tables `(Q_V, Q_T)` for `policy`, flat over `(state, action)`.
///
/// These are the tables a converged Q-learner would hold: `Q_V = 1, Q_T = 0`
/// on `G`; both zero on terminal states.
pub fn exact_q_tables(mdp: &FiniteMdp, policy: &StochasticPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
    let (v, t) = evaluate_policy_exact(mdp, policy)?;
    Ok(q_from_values(mdp, &v, &t))
}

pub fn q_from_values(mdp: &FiniteMdp, v: &[f64], t: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.gamma();
    let mut q_v = vec![0.0; n * m];
    let mut q_t = vec![0.0; n * m];
    for s in 0..n {
        for a in 0..m {
            let k = s * m + a;
            if mdp.is_target(s) {
                q_v[k] = 1.0;
            } else if mdp.is_interior(s) {
                q_v[k] = gamma * mdp.expected(s, a, v);
                q_t[k] = 1.0 + gamma * mdp.expected(s, a, t);
            }
        }
    }
    (q_v, q_t)
}

/// `{s : value(s) <= alpha}`; ties are members.
pub fn safe_set(values: &ValueTable, alpha: f64) -> SafeSetEstimate {
    SafeSetEstimate::from_values(&values.values, alpha, SafeSetSource::Oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::chain::ChainWorldConfig;

    fn chain(slip: f64) -> FiniteMdp {
        ChainWorldConfig { slip_prob: slip, ..ChainWorldConfig::default() }.to_mdp().unwrap()
    }

    #[test]
    fn boundary_states() {
        let mdp = chain(0.1);
        let v = optimal_unsafety(&mdp, DEFAULT_TOL).unwrap();
        assert_eq!(v.values[0], 0.0);
        assert_eq!(v.values[4], 1.0);
        assert!(v.residual < DEFAULT_TOL);
    }

    #[test]
    fn always_left_without_slip_is_safe() {
        let mdp = chain(0.0);
        let pi = StochasticPolicy::deterministic(&[0; 5], 2).unwrap();
        let v = policy_unsafety(&mdp, &pi, DEFAULT_TOL).unwrap();
        assert_eq!(v.values[1], 0.0);
        assert_eq!(v.values[3], 0.0);
    }

    #[test]
    fn corridor_hitting_time() {
        // 0 -> 1 -> 2 -> 3 (terminal)
        let mdp = FiniteMdp::new(
            4,
            1,
            vec![vec![(1, 1.0)], vec![(2, 1.0)], vec![(3, 1.0)], vec![(3, 1.0)]],
            vec![false; 4],
            vec![false, false, false, true],
            1.0,
        )
        .unwrap();
        let pi = StochasticPolicy::uniform(4, 1);
        let t = policy_hitting_time(&mdp, &pi, DEFAULT_TOL).unwrap();
        assert_eq!(t.times, vec![3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn zero_tolerance_rejected() {
        let mdp = chain(0.1);
        assert!(matches!(optimal_unsafety(&mdp, 0.0), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn safe_set_thresholds() {
        let table = ValueTable { values: vec![0.0, 0.2, 0.3, 1.0], residual: 0.0, sweeps: 1 };
        assert_eq!(safe_set(&table, 0.2).member, vec![true, true, false, false]);
        assert_eq!(safe_set(&table, 1.0).member, vec![true; 4]);
    }

    #[test]
    fn safe_set_at_zero_alpha_keeps_guaranteed_states() {
        // With slip, only the terminal state itself is guaranteed safe.
        let mdp = chain(0.1);
        let v = optimal_unsafety(&mdp, DEFAULT_TOL).unwrap();
        assert_eq!(safe_set(&v, 0.0).member, vec![true, false, false, false, false]);
        let mdp = chain(0.0);
        let v = optimal_unsafety(&mdp, DEFAULT_TOL).unwrap();
        assert_eq!(safe_set(&v, 0.0).member, vec![true, true, true, true, false]);
    }

    #[test]
    fn exact_matches_iterative() {
        let mdp = chain(0.1);
        let pi = StochasticPolicy::from_rows(vec![vec![0.7, 0.3]; 5]).unwrap();
        let (v, t) = evaluate_policy_exact(&mdp, &pi).unwrap();
        let vi = policy_unsafety(&mdp, &pi, 1e-13).unwrap();
        let ti = policy_hitting_time(&mdp, &pi, 1e-13).unwrap();
        for s in 0..5 {
            assert!((v[s] - vi.values[s]).abs() < 1e-10);
            assert!((t[s] - ti.times[s]).abs() < 1e-9);
        }
    }
}
