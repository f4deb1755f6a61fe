//! Linear programs over the probability simplex with one extra inequality:
//!
//! ```text
//! optimize  sum_a objective[a] * pi[a]
//! s.t.      sum_a constraint_coeffs[a] * pi[a] <= budget,  pi in simplex
//! ```
//!
//! Every basic feasible solution is either a pure action that satisfies the
//! inequality or a two-action mixture with the inequality active, so the
//! solver enumerates those candidates directly.

use crate::error::{Error, Result};

/// Slack allowed when deciding that a pure action satisfies the constraint.
pub const FEASIBILITY_TOL: f64 = 1e-12;
/// Objective differences below this do not displace an earlier candidate.
const TIE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLp {
    pub objective: Vec<f64>,
    pub constraint_coeffs: Vec<f64>,
    pub budget: f64,
    pub sense: LpSense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub probs: Vec<f64>,
    pub value: f64,
}

impl PolicyLp {
    pub fn new(objective: Vec<f64>, constraint_coeffs: Vec<f64>, budget: f64, sense: LpSense) -> Self {
        Self { objective, constraint_coeffs, budget, sense }
    }

    fn better(&self, candidate: f64, incumbent: f64) -> bool {
        match self.sense {
            LpSense::Minimize => candidate < incumbent - TIE_TOL,
            LpSense::Maximize => candidate > incumbent + TIE_TOL,
        }
    }
}

/// Solves the LP exactly. Ties go to the lowest first action index, then the
/// lowest second index; a pure action beats any mixture that starts at it.
pub fn solve_policy_lp(lp: &PolicyLp) -> Result<LpSolution> {
    let n = lp.objective.len();
    if n == 0 || lp.constraint_coeffs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: lp.constraint_coeffs.len(),
            context: "LP objective vs constraint",
        });
    }
    let (c, g, b) = (&lp.objective, &lp.constraint_coeffs, lp.budget);
    let min_coeff = g.iter().copied().fold(f64::INFINITY, f64::min);
    if !(b >= min_coeff - FEASIBILITY_TOL) {
        return Err(Error::InfeasibleLp { budget: b, min_coeff });
    }

    // (first, second, weight on first, value)
    let mut best: Option<(usize, usize, f64, f64)> = None;
    let mut offer = |cand: (usize, usize, f64, f64)| match best {
        Some(inc) if !lp.better(cand.3, inc.3) => {}
        _ => best = Some(cand),
    };
    for i in 0..n {
        if g[i] <= b + FEASIBILITY_TOL {
            offer((i, i, 1.0, c[i]));
        }
        for j in i + 1..n {
            let (lo, hi) = if g[i] < g[j] { (i, j) } else { (j, i) };
            if !(g[lo] < b && b < g[hi]) {
                continue;
            }
            let w_lo = (g[hi] - b) / (g[hi] - g[lo]);
            let (w_i, w_j) = if lo == i { (w_lo, 1.0 - w_lo) } else { (1.0 - w_lo, w_lo) };
            offer((i, j, w_i, w_i * c[i] + w_j * c[j]));
        }
    }
    let (i, j, w_i, value) = best.expect("a feasible LP has a pure or mixed vertex");
    let mut probs = vec![0.0; n];
    probs[i] = w_i;
    if j != i {
        probs[j] = 1.0 - w_i;
    }
    Ok(LpSolution { probs, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(c: &[f64], g: &[f64], b: f64, sense: LpSense) -> LpSolution {
        solve_policy_lp(&PolicyLp::new(c.to_vec(), g.to_vec(), b, sense)).unwrap()
    }

    #[test]
    fn argmin_infeasible_and_mixing_cannot_help() {
        let s = solve(&[0.5, 0.1], &[0.3, 0.9], 0.3, LpSense::Minimize);
        assert_eq!(s.probs, vec![1.0, 0.0]);
        assert_eq!(s.value, 0.5);
    }

    #[test]
    fn active_constraint_mixture() {
        let s = solve(&[0.9, 0.1], &[0.2, 0.8], 0.32, LpSense::Minimize);
        assert!((s.probs[0] - 0.8).abs() < 1e-12);
        assert!((s.probs[1] - 0.2).abs() < 1e-12);
        assert!((s.value - 0.74).abs() < 1e-12);
    }

    #[test]
    fn slack_budget_gives_pure_argmin_and_argmax() {
        let c = [0.4, 0.2, 0.7, 0.2];
        let g = [0.1, 0.5, 0.3, 0.2];
        let s = solve(&c, &g, 0.5, LpSense::Minimize);
        assert_eq!(s.probs, vec![0.0, 1.0, 0.0, 0.0]);
        let s = solve(&c, &g, 0.5, LpSense::Maximize);
        assert_eq!(s.probs, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn infeasible_budget() {
        let err = solve_policy_lp(&PolicyLp::new(vec![0.1, 0.2], vec![0.5, 0.6], 0.4, LpSense::Minimize));
        assert!(matches!(err, Err(Error::InfeasibleLp { .. })));
    }

    #[test]
    fn ties_prefer_lowest_index() {
        let s = solve(&[0.3, 0.3, 0.3], &[0.0, 0.0, 0.0], 1.0, LpSense::Minimize);
        assert_eq!(s.probs, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(solve_policy_lp(&PolicyLp::new(vec![0.1], vec![0.5, 0.6], 1.0, LpSense::Minimize)).is_err());
    }
}
