//! Independent reference implementations used only by the tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use safeset::deep::{Mlp, TopActivation};
use safeset::lp::{LpSense, PolicyLp};
use safeset::mdp::{FiniteMdp, Row, StochasticPolicy};

/// Gaussian elimination with partial pivoting on a dense system.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        assert!(d.abs() > 1e-14, "singular reference system");
        for r in col + 1..n {
            let f = a[r][col] / d;
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `P(reach G)` of a stochastic policy: states that cannot reach `G` get 0,
/// the rest solve `(I - gamma P) V = gamma P 1_G` restricted to them.
pub fn reach_values(mdp: &FiniteMdp, policy: &StochasticPolicy) -> Vec<f64> {
    let n = mdp.num_states();
    let na = mdp.num_actions();
    let succ = |s: usize| -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for a in 0..na {
            let w = policy.row(s)[a];
            if w > 0.0 {
                out.extend(mdp.row(s, a).iter().map(|&(t, p)| (t, w * p)));
            }
        }
        out
    };
    // Backward reachability of G through interior states.
    let mut reaches: Vec<bool> = (0..n).map(|s| mdp.is_target(s)).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if mdp.is_interior(s) && !reaches[s] && succ(s).iter().any(|&(t, p)| p > 0.0 && reaches[t]) {
                reaches[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&s| mdp.is_interior(s) && reaches[s]).collect();
    let mut slot = vec![usize::MAX; n];
    for (i, &s) in idx.iter().enumerate() {
        slot[s] = i;
    }
    let g = mdp.gamma();
    let m = idx.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut b = vec![0.0; m];
    for (i, &s) in idx.iter().enumerate() {
        a[i][i] += 1.0;
        for (t, p) in succ(s) {
            if mdp.is_target(t) {
                b[i] += g * p;
            } else if slot[t] != usize::MAX {
                a[i][slot[t]] -= g * p;
            }
        }
    }
    let x = if m > 0 { gauss_solve(a, b) } else { vec![] };
    let mut v: Vec<f64> = (0..n).map(|s| if mdp.is_target(s) { 1.0 } else { 0.0 }).collect();
    for (i, &s) in idx.iter().enumerate() {
        v[s] = x[i];
    }
    v
}

/// Pointwise minimum of `reach_values` over every deterministic Markov policy.
pub fn brute_force_optimal(mdp: &FiniteMdp) -> Vec<f64> {
    let n = mdp.num_states();
    let na = mdp.num_actions();
    let free: Vec<usize> = (0..n).filter(|&s| mdp.is_interior(s)).collect();
    let mut actions = vec![0usize; n];
    let mut best = vec![f64::INFINITY; n];
    loop {
        let pi = StochasticPolicy::deterministic(&actions, na).unwrap();
        for (b, v) in best.iter_mut().zip(reach_values(mdp, &pi)) {
            *b = b.min(v);
        }
        // Odometer over the free states.
        let mut k = 0;
        loop {
            if k == free.len() {
                return best;
            }
            let s = free[k];
            actions[s] += 1;
            if actions[s] < na {
                break;
            }
            actions[s] = 0;
            k += 1;
        }
    }
}

/// Random sparse MDP with at least one target state and optional terminal states.
pub fn random_mdp<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize, gamma: f64) -> FiniteMdp {
    let num_target = rng.random_range(1..=2.min(num_states - 1));
    let num_terminal = rng.random_range(0..=2.min(num_states - 1 - num_target));
    let mut target = vec![false; num_states];
    let mut terminal = vec![false; num_states];
    let mut order: Vec<usize> = (0..num_states).collect();
    for i in (1..num_states).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for &s in &order[..num_target] {
        target[s] = true;
    }
    for &s in &order[num_target..num_target + num_terminal] {
        terminal[s] = true;
    }
    let mut rows: Vec<Row> = Vec::with_capacity(num_states * num_actions);
    for s in 0..num_states {
        for _ in 0..num_actions {
            if terminal[s] || target[s] {
                rows.push(vec![(s, 1.0)]);
                continue;
            }
            let k = rng.random_range(1..=3);
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            rows.push(w.iter().map(|x| (rng.random_range(0..num_states), x / total)).collect());
        }
    }
    FiniteMdp::new(num_states, num_actions, rows, target, terminal, gamma).unwrap()
}

/// Random stochastic policy with some exact zeros.
pub fn random_policy<R: Rng>(rng: &mut R, num_states: usize, num_actions: usize) -> StochasticPolicy {
    let rows = (0..num_states)
        .map(|_| {
            let w: Vec<f64> =
                (0..num_actions).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                let mut r = vec![0.0; num_actions];
                r[0] = 1.0;
                r
            } else {
                let mut r: Vec<f64> = w.iter().map(|x| x / total).collect();
                let fix: f64 = 1.0 - r.iter().sum::<f64>();
                r[0] += fix;
                r
            }
        })
        .collect();
    StochasticPolicy::from_rows(rows).unwrap()
}

/// The fixed oracle corpus: `(num_states, num_actions, gamma)` per entry, all
/// generated from one seed.
pub fn oracle_corpus() -> Vec<FiniteMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let gammas = [1.0, 0.99, 0.9];
    let mut out = Vec::new();
    for i in 0..60 {
        let ns = 2 + i % 11;
        let na = 1 + (i / 11) % 3;
        out.push(random_mdp(&mut rng, ns, na, gammas[i % 3]));
    }
    out
}

/// Dense two-phase simplex for `min c.x` s.t. `A x = b`, `x >= 0`, with
/// Bland's rule. Returns the optimal value, or `None` if infeasible.
pub fn dense_simplex(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = a.len();
    let n = c.len();
    // Columns: n originals, m artificials, then the right-hand side.
    let w = n + m + 1;
    let mut t = vec![vec![0.0; w]; m];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = sign * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][w - 1] = sign * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let phase1: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    pivot_loop(&mut t, &mut basis, &phase1, n + m);
    let infeas: f64 = basis.iter().zip(&t).filter(|(&j, _)| j >= n).map(|(_, r)| r[w - 1]).sum();
    if infeas > 1e-9 {
        return None;
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-12) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut cost: Vec<f64> = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    pivot_loop(&mut t, &mut basis, &cost, n);
    let mut x = vec![0.0; n];
    for (i, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = t[i][w - 1];
        }
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Some((value, x))
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pr = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i != row && r[col] != 0.0 {
            let f = r[col];
            for (v, q) in r.iter_mut().zip(&pr) {
                *v -= f * q;
            }
        }
    }
    basis[row] = col;
}

fn pivot_loop(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) {
    let w = t[0].len();
    for _ in 0..10_000 {
        // Reduced costs c_j - c_B B^-1 A_j.
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let z: f64 = basis.iter().zip(t.iter()).map(|(&bj, r)| cost[bj] * r[j]).sum();
            cost[j] - z < -1e-12
        });
        let Some(col) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for (i, r) in t.iter().enumerate() {
            if r[col] > 1e-12 {
                let ratio = r[w - 1] / r[col];
                match leave {
                    Some((li, lr)) if ratio > lr + 1e-15 || (ratio >= lr - 1e-15 && basis[i] > basis[li]) => {}
                    _ => leave = Some((i, ratio)),
                }
            }
        }
        let Some((row, _)) = leave else { return };
        pivot(t, basis, row, col);
    }
    panic!("simplex did not terminate");
}

/// Central finite-difference derivative of `f` w.r.t. `x[i]`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// Relative error with an absolute floor for near-zero gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradStats {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradStats {
    pub fn merge(&mut self, other: GradStats) {
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Compares `analytic` against central differences of `f`. Coordinates where
/// the step straddles a ReLU kink or a clamp edge (two step sizes disagree)
/// are skipped and counted.
pub fn grad_check(params: &[f64], analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> GradStats {
    const H: f64 = 1e-5;
    let mut st = GradStats::default();
    for i in 0..params.len() {
        let fd = central_diff(f, params, i, H);
        let fd_fine = central_diff(f, params, i, H / 4.0);
        if rel_err(fd, fd_fine) > 1e-6 {
            st.skipped += 1;
            continue;
        }
        st.max_rel_err = st.max_rel_err.max(rel_err(analytic[i], fd));
        st.checked += 1;
    }
    st
}

fn grad_net(rng: &mut ChaCha8Rng, input: usize, top: TopActivation, out_bias: f64) -> Mlp {
    let mut m = Mlp::new(&[input, 8, 8, 1], top, rng).unwrap();
    for p in &mut m.params {
        *p = rng.random_range(-0.6..0.6);
    }
    m.fill_biases(out_bias, [2]);
    m
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub const GRAD_KINDS: [&str; 5] = ["critic loss", "ss actor", "exploratory actor", "multiplier", "input"];

/// One randomized instance per call of every analytic gradient in the deep
/// module, on networks with two hidden layers of 8 units and a batch of 5.
pub fn gradient_instance(rng: &mut ChaCha8Rng) -> [GradStats; 5] {
    use safeset::deep::{actor_objective_grad, critic_loss_grad, multiplier_objective_grad};
    const B: usize = 5;
    let mut out = [GradStats::default(); 5];

    let critic = grad_net(rng, 3, TopActivation::Clamp01, 0.5);
    let x = uniform(rng, 3 * B, -1.0, 1.0);
    let y = uniform(rng, B, 0.0, 1.0);
    let (_, g) = critic_loss_grad(&critic, &x, &y);
    let mut probe = critic.clone();
    out[0] = grad_check(&critic.params, &g, &mut |p| {
        probe.params.copy_from_slice(p);
        critic_loss_grad(&probe, &x, &y).0
    });

    let weights: [(fn(f64) -> f64, fn(f64) -> f64); 2] = [(|l| 1.0 + l, |l| l), (|l| -(1.0 - l), |l| l)];
    for (k, (w_v, w_t)) in weights.into_iter().enumerate() {
        let actor = grad_net(rng, 2, TopActivation::Tanh, 0.0);
        let critic_v = grad_net(rng, 3, TopActivation::Clamp01, 0.5);
        let critic_t = grad_net(rng, 3, TopActivation::Clamp01, 0.5);
        let s = uniform(rng, 2 * B, -1.0, 1.0);
        let lam = uniform(rng, B, 0.0, 3.0);
        let m = rng.random_range(0.0..2.0);
        let wv: Vec<f64> = lam.iter().map(|&l| w_v(l)).collect();
        let wt: Vec<f64> = lam.iter().map(|&l| w_t(l) * m).collect();
        let (_, g) = actor_objective_grad(&actor, &critic_v, &critic_t, &s, &wv, &wt);
        let mut probe = actor.clone();
        out[1 + k] = grad_check(&actor.params, &g, &mut |p| {
            probe.params.copy_from_slice(p);
            actor_objective_grad(&probe, &critic_v, &critic_t, &s, &wv, &wt).0
        });
    }

    let lam = grad_net(rng, 2, TopActivation::ClampLog, 0.0);
    let s = uniform(rng, 2 * B, -1.0, 1.0);
    let r = uniform(rng, B, -0.5, 0.5);
    let (_, g) = multiplier_objective_grad(&lam, &s, &r);
    let mut probe = lam.clone();
    out[3] = grad_check(&lam.params, &g, &mut |p| {
        probe.params.copy_from_slice(p);
        multiplier_objective_grad(&probe, &s, &r).0
    });

    let w = uniform(rng, B, -1.0, 1.0);
    let tape = critic.forward(&x, B);
    let dx = critic.backward(&tape, &w, None, true).unwrap();
    out[4] = grad_check(&x, &dx, &mut |xs| critic.forward(xs, B).raw.iter().zip(&w).map(|(r, w)| r * w).sum());
    out
}

/// Random policy LP with up to 8 actions; a share of quantized values produces ties.
pub fn random_lp<R: Rng>(rng: &mut R) -> PolicyLp {
    let n = rng.random_range(1..=8);
    let draw = |rng: &mut R| if rng.random_bool(0.3) { rng.random_range(0..4) as f64 / 4.0 } else { rng.random_range(0.0..1.0) };
    let objective: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
    let coeffs: Vec<f64> = (0..n).map(|_| draw(rng) * 2.0).collect();
    let lo = coeffs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = coeffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let budget = if rng.random_bool(0.1) { lo } else { lo + rng.random_range(0.0..=1.0) * (hi - lo + 0.1) };
    let sense = if rng.random_bool(0.5) { LpSense::Minimize } else { LpSense::Maximize };
    PolicyLp::new(objective, coeffs, budget, sense)
}

/// Optimal value of `lp` from [`dense_simplex`], with a slack column for the budget row.
pub fn lp_reference(lp: &PolicyLp) -> f64 {
    let n = lp.objective.len();
    let sign = if lp.sense == LpSense::Minimize { 1.0 } else { -1.0 };
    let mut c: Vec<f64> = lp.objective.iter().map(|x| sign * x).collect();
    c.push(0.0);
    let mut ones = vec![1.0; n];
    ones.push(0.0);
    let mut row = lp.constraint_coeffs.clone();
    row.push(1.0);
    let (v, _) = dense_simplex(&c, &[ones, row], &[1.0, lp.budget]).expect("feasible");
    sign * v
}

/// Worst deviations of [`solve_policy_lp`] over `count` random instances:
/// `(objective error, max support, constraint residual, simplex-sum error)`.
pub fn lp_equivalence(seed: u64, count: usize) -> (f64, usize, f64, f64) {
    use safeset::lp::solve_policy_lp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut obj, mut support, mut resid, mut sum) = (0.0f64, 0usize, f64::NEG_INFINITY, 0.0f64);
    for _ in 0..count {
        let lp = random_lp(&mut rng);
        let sol = solve_policy_lp(&lp).unwrap();
        obj = obj.max((sol.value - lp_reference(&lp)).abs());
        support = support.max(sol.probs.iter().filter(|&&p| p > 0.0).count());
        if sol.probs.iter().any(|&p| p < 0.0) {
            sum = f64::INFINITY;
        }
        sum = sum.max((sol.probs.iter().sum::<f64>() - 1.0).abs());
        let used: f64 = sol.probs.iter().zip(&lp.constraint_coeffs).map(|(p, c)| p * c).sum();
        resid = resid.max(used - lp.budget);
    }
    (obj, support, resid, sum)
}

/// Exact-evaluation policy iteration with the Lyapunov improvement steps.
/// Checks, for `iters` consecutive improvements, that the SS-policy stays
/// safe on the previous safe set, that the safe set only grows, and that
/// the exploratory policy is safe on the current safe set. Returns the
/// largest violation of the two probability bounds and the final safe-set size.
pub struct PropReport {
    pub max_ss_excess: f64,
    pub max_exp_excess: f64,
    pub inclusion_failures: usize,
    pub sizes: Vec<usize>,
}

pub fn lyapunov_iteration(mdp: &FiniteMdp, start: StochasticPolicy, alpha: f64, iters: usize) -> PropReport {
    use safeset::oracle::{evaluate_policy_exact, q_from_values};
    use safeset::tabular::{auxiliary_cost, improve_exploratory_policy, improve_ss_policy, QTables};

    let n = mdp.num_states();
    let na = mdp.num_actions();
    let free: Vec<usize> = (0..n).filter(|&s| !mdp.is_target(s)).collect();
    let mut pi = start;
    let (mut v, mut t) = evaluate_policy_exact(mdp, &pi).unwrap();
    let mut report = PropReport { max_ss_excess: f64::NEG_INFINITY, max_exp_excess: f64::NEG_INFINITY, inclusion_failures: 0, sizes: vec![] };
    for _ in 0..iters {
        let safe: Vec<usize> = free.iter().copied().filter(|&s| v[s] <= alpha).collect();
        report.sizes.push(safe.len());
        let (q_v, q_t) = q_from_values(mdp, &v, &t);
        let tables = QTables::from_tables(n, na, q_v, q_t).unwrap();
        let vs: Vec<f64> = free.iter().map(|&s| v[s]).collect();
        let ts: Vec<f64> = free.iter().map(|&s| t[s]).collect();
        let eps = auxiliary_cost(&vs, &ts, alpha);

        let pi_e = improve_exploratory_policy(mdp, &tables, eps, &pi).unwrap();
        let (v_e, _) = evaluate_policy_exact(mdp, &pi_e).unwrap();
        for &s in &safe {
            report.max_exp_excess = report.max_exp_excess.max(v_e[s] - alpha);
        }

        let next = improve_ss_policy(mdp, &tables, eps, &pi).unwrap();
        let (v2, t2) = evaluate_policy_exact(mdp, &next).unwrap();
        for &s in &safe {
            report.max_ss_excess = report.max_ss_excess.max(v2[s] - alpha);
            if v2[s] > alpha {
                report.inclusion_failures += 1;
            }
        }
        pi = next;
        v = v2;
        t = t2;
    }
    report.sizes.push(free.iter().filter(|&&s| v[s] <= alpha).count());
    report
}
