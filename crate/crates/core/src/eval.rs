//! Exact evaluation of stationary policies under a reward table.
//!
//! Values are normalized by the effective horizon: `v(s) = (1-γ) E[Σ γ^i r_i]`,
//! so they share the scale of the rewards. Two routes are provided:
//!
//! * Synchronous Bellman sweeps ([`evaluate_policy`],
//!   [`discounted_state_distribution`], [`optimal_policy`]) iterated until the
//!   largest change falls below a tolerance.
//! * [`PolicyEvaluator`], which factors `I - γ P_π` once and then solves for
//!   any number of reward tables. This is what the k-of-N loop uses, since it
//!   evaluates one policy under N rewards per iteration.

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};
use crate::mdp::{expected_reward, RewardTable, StateActionValues, StationaryPolicy, TabularMdp};

/// Default convergence tolerance for Bellman sweeps.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default sweep cap before reporting non-convergence.
pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub values: Vec<f64>,
    /// Largest Bellman change at termination (iterative) or Bellman residual
    /// of the solution (direct).
    pub residual: f64,
}

impl ValueFunction {
    pub fn get(&self, s: usize) -> f64 {
        self.values[s]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub values: StateActionValues,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageFunction {
    pub values: StateActionValues,
}

/// How policy values are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMethod {
    /// Synchronous sweeps to the given tolerance.
    Iterative { tol: f64, max_sweeps: usize },
    /// Direct solution of the linear Bellman system.
    Direct,
}

impl Default for EvalMethod {
    fn default() -> Self {
        EvalMethod::Direct
    }
}

fn check_inputs(mdp: &TabularMdp, policy: &StationaryPolicy, tol: f64) -> Result<()> {
    policy.check_shape(mdp.n_states(), mdp.n_actions())?;
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance must be positive (got {tol})")));
    }
    Ok(())
}

/// `Σ_a π(a|s) R(s,a)` for every state.
fn policy_reward(policy: &StationaryPolicy, expected: &StateActionValues) -> Vec<f64> {
    (0..policy.n_states())
        .map(|s| policy.row(s).iter().zip(expected.row(s)).map(|(p, r)| p * r).sum())
        .collect()
}

/// Dense policy-marginalized transition matrix `P_π[s][s']`.
fn policy_transition(mdp: &TabularMdp, policy: &StationaryPolicy) -> DMatrix<f64> {
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for (a, &pa) in policy.row(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for &(next, pn) in mdp.successors(s, a) {
                p[(s, next)] += pa * pn;
            }
        }
    }
    p
}

fn backup(mdp: &TabularMdp, expected: &StateActionValues, values: &[f64], s: usize, a: usize) -> f64 {
    let g = mdp.discount();
    let future: f64 = mdp.successors(s, a).iter().map(|&(n, p)| p * values[n]).sum();
    (1.0 - g) * expected.get(s, a) + g * future
}

/// Iterates `v(s) = Σ_a π(a|s) Σ_s' p(s'|s,a)[(1-γ) r(s,a,s') + γ v(s')]`
/// synchronously from `v = 0` until the largest change is below `tol`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    reward: &RewardTable,
    tol: f64,
) -> Result<ValueFunction> {
    evaluate_policy_capped(mdp, policy, reward, tol, DEFAULT_MAX_SWEEPS)
}

pub fn evaluate_policy_capped(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    reward: &RewardTable,
    tol: f64,
    max_sweeps: usize,
) -> Result<ValueFunction> {
    check_inputs(mdp, policy, tol)?;
    let expected = expected_reward(mdp, reward)?;
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_sweeps {
        change = 0.0;
        for s in 0..n {
            let v: f64 = policy
                .row(s)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(a, &p)| p * backup(mdp, &expected, &values, s, a))
                .sum();
            change = change.max((v - values[s]).abs());
            next[s] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if change < tol {
            return Ok(ValueFunction { values, residual: change });
        }
    }
    Err(Error::NonConvergence { sweeps: max_sweeps, residual: change })
}

/// `q(s,a) = Σ_s' p(s'|s,a)[(1-γ) r(s,a,s') + γ v(s')]`.
pub fn q_values(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    reward: &RewardTable,
    value_fn: &ValueFunction,
) -> Result<QFunction> {
    policy.check_shape(mdp.n_states(), mdp.n_actions())?;
    let expected = expected_reward(mdp, reward)?;
    q_from_expected(mdp, &expected, &value_fn.values)
}

fn q_from_expected(mdp: &TabularMdp, expected: &StateActionValues, values: &[f64]) -> Result<QFunction> {
    if values.len() != mdp.n_states() {
        return Err(Error::shape("value function length differs from state count"));
    }
    let mut q = StateActionValues::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            q.row_mut(s)[a] = backup(mdp, expected, values, s, a);
        }
    }
    Ok(QFunction { values: q })
}

/// `ρ(s,a) = q(s,a) - Σ_a' π(a'|s) q(s,a')`.
pub fn advantages(q: &QFunction, policy: &StationaryPolicy) -> Result<AdvantageFunction> {
    policy.check_shape(q.values.n_states(), q.values.n_actions())?;
    let mut rho = q.values.clone();
    for s in 0..rho.n_states() {
        let v: f64 = policy.row(s).iter().zip(q.values.row(s)).map(|(p, x)| p * x).sum();
        rho.row_mut(s).iter_mut().for_each(|x| *x -= v);
    }
    Ok(AdvantageFunction { values: rho })
}

/// `Σ_s d(s) v(s)`.
pub fn expected_return(value_fn: &ValueFunction, initial_dist: &[f64]) -> f64 {
    assert_eq!(value_fn.values.len(), initial_dist.len(), "value/initial length mismatch");
    value_fn.values.iter().zip(initial_dist).map(|(v, d)| v * d).sum()
}

/// Point-mass distribution over `n` states.
pub fn point_mass(n: usize, s: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[s] = 1.0;
    d
}

/// Fixed point of `d = (1-γ) start + γ P_πᵀ d`, the normalized discounted
/// visitation distribution from `start`.
pub fn discounted_state_distribution(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    check_inputs(mdp, policy, tol)?;
    let n = mdp.n_states();
    if start.len() != n {
        return Err(Error::shape("start distribution length differs from state count"));
    }
    let g = mdp.discount();
    let mut d = start.to_vec();
    let mut next = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..DEFAULT_MAX_SWEEPS {
        next.iter_mut().zip(start).for_each(|(x, &s0)| *x = (1.0 - g) * s0);
        for s in 0..n {
            if d[s] == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for &(to, p) in mdp.successors(s, a) {
                    next[to] += g * d[s] * pa * p;
                }
            }
        }
        change = d.iter().zip(&next).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut d, &mut next);
        if change < tol {
            return Ok(d);
        }
    }
    Err(Error::NonConvergence { sweeps: DEFAULT_MAX_SWEEPS, residual: change })
}

/// Value iteration followed by the greedy deterministic policy that picks the
/// lowest-index maximizing action in each state. The returned values are the
/// greedy policy's own exact evaluation.
pub fn optimal_policy(
    mdp: &TabularMdp,
    reward: &RewardTable,
    tol: f64,
) -> Result<(StationaryPolicy, ValueFunction)> {
    if !(tol > 0.0) {
        return Err(Error::config(format!("tolerance must be positive (got {tol})")));
    }
    let expected = expected_reward(mdp, reward)?;
    let n = mdp.n_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut change = f64::INFINITY;
    for _ in 0..DEFAULT_MAX_SWEEPS {
        change = 0.0;
        for s in 0..n {
            let best = (0..mdp.n_actions())
                .map(|a| backup(mdp, &expected, &values, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - values[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut values, &mut next);
        if change < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: DEFAULT_MAX_SWEEPS, residual: change });
    }
    let q = q_from_expected(mdp, &expected, &values)?;
    let actions: Vec<usize> = (0..n).map(|s| argmax_first(q.values.row(s))).collect();
    let policy = StationaryPolicy::deterministic(mdp.n_actions(), &actions)?;
    let value = PolicyEvaluator::new(mdp, &policy)?.evaluate_expected(&expected);
    Ok((policy, value))
}

/// Index of the first maximal entry.
pub fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Evaluates one policy under many reward tables by factoring `I - γ P_π`
/// once.
pub struct PolicyEvaluator<'a> {
    mdp: &'a TabularMdp,
    policy: &'a StationaryPolicy,
    // None when γ = 0, where values are immediate rewards
    lu: Option<LU<f64, Dyn, Dyn>>,
}

impl<'a> PolicyEvaluator<'a> {
    pub fn new(mdp: &'a TabularMdp, policy: &'a StationaryPolicy) -> Result<Self> {
        policy.check_shape(mdp.n_states(), mdp.n_actions())?;
        let lu = if mdp.discount() == 0.0 {
            None
        } else {
            let n = mdp.n_states();
            let system = DMatrix::identity(n, n) - policy_transition(mdp, policy) * mdp.discount();
            Some(system.lu())
        };
        Ok(PolicyEvaluator { mdp, policy, lu })
    }

    pub fn evaluate(&self, reward: &RewardTable) -> Result<ValueFunction> {
        Ok(self.evaluate_expected(&expected_reward(self.mdp, reward)?))
    }

    /// Values from a precomputed expected-reward matrix `R(s, a)`.
    pub fn evaluate_expected(&self, expected: &StateActionValues) -> ValueFunction {
        let r_pi = policy_reward(self.policy, expected);
        let g = self.mdp.discount();
        let values: Vec<f64> = match &self.lu {
            None => r_pi,
            Some(lu) => {
                let rhs = DVector::from_iterator(r_pi.len(), r_pi.iter().map(|r| (1.0 - g) * r));
                // I - γP is strictly diagonally dominant for γ < 1, hence invertible
                lu.solve(&rhs).expect("I - γP_π is nonsingular").iter().copied().collect()
            }
        };
        let residual = self.bellman_residual(expected, &values);
        ValueFunction { values, residual }
    }

    fn bellman_residual(&self, expected: &StateActionValues, values: &[f64]) -> f64 {
        (0..self.mdp.n_states())
            .map(|s| {
                let v: f64 = self
                    .policy
                    .row(s)
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(a, &p)| p * backup(self.mdp, expected, values, s, a))
                    .sum();
                (v - values[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `v_∅ = Σ_s d_∅(s) v(s)`.
    pub fn expected_return(&self, reward: &RewardTable) -> Result<f64> {
        Ok(expected_return(&self.evaluate(reward)?, self.mdp.initial_dist()))
    }

    pub fn q_values(&self, reward: &RewardTable) -> Result<(ValueFunction, QFunction)> {
        let expected = expected_reward(self.mdp, reward)?;
        let v = self.evaluate_expected(&expected);
        let q = q_from_expected(self.mdp, &expected, &v.values)?;
        Ok((v, q))
    }

    /// Solves `(I - γ P_πᵀ) d = (1-γ) start` directly.
    pub fn state_distribution(&self, start: &[f64]) -> Result<Vec<f64>> {
        let n = self.mdp.n_states();
        if start.len() != n {
            return Err(Error::shape("start distribution length differs from state count"));
        }
        let g = self.mdp.discount();
        if g == 0.0 {
            return Ok(start.to_vec());
        }
        let system = DMatrix::identity(n, n) - policy_transition(self.mdp, self.policy).transpose() * g;
        let rhs = DVector::from_iterator(n, start.iter().map(|x| (1.0 - g) * x));
        Ok(system.lu().solve(&rhs).expect("nonsingular").iter().copied().collect())
    }
}

/// Evaluates with the requested method.
pub fn evaluate_with(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    reward: &RewardTable,
    method: EvalMethod,
) -> Result<ValueFunction> {
    match method {
        EvalMethod::Iterative { tol, max_sweeps } => evaluate_policy_capped(mdp, policy, reward, tol, max_sweeps),
        EvalMethod::Direct => PolicyEvaluator::new(mdp, policy)?.evaluate(reward),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RewardLayout;

    /// s0 -> s1 (reward 1), s1 -> s1 (reward 0); one action.
    fn chain(discount: f64) -> (TabularMdp, RewardTable) {
        let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], discount).unwrap();
        let r = RewardTable::from_fn(2, 1, |s, _, _| if s == 0 { 1.0 } else { 0.0 }).unwrap();
        (mdp, r)
    }

    #[test]
    fn constant_reward_gives_constant_value() {
        for g in [0.0, 0.5, 0.9, 0.99] {
            let (mdp, _) = chain(g);
            let r = RewardTable::constant(2, 1, -0.7);
            let v = evaluate_policy(&mdp, &StationaryPolicy::uniform(2, 1), &r, 1e-10).unwrap();
            // sup-norm stopping leaves an error of at most tol * γ / (1 - γ)
            for x in v.values {
                assert!((x + 0.7).abs() < 1e-10 * 100.0, "{x}");
            }
        }
    }

    #[test]
    fn zero_discount_is_immediate_reward() {
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0], 0.0).unwrap();
        let r = RewardTable::with_tight_bound(1, 2, RewardLayout::StateAction, vec![1.0, 3.0]).unwrap();
        let pi = StationaryPolicy::new(1, 2, vec![0.25, 0.75]).unwrap();
        let v = evaluate_policy(&mdp, &pi, &r, 1e-9).unwrap();
        assert!((v.values[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_closed_form() {
        // v(s0) = (1-γ)·1 + γ·v(s1) = 0.5, v(s1) = 0
        let (mdp, r) = chain(0.5);
        let pi = StationaryPolicy::uniform(2, 1);
        let v = evaluate_policy(&mdp, &pi, &r, 1e-12).unwrap();
        assert!((v.values[0] - 0.5).abs() < 1e-12);
        assert!(v.values[1].abs() < 1e-12);
        assert!(v.residual < 1e-12);
        let q = q_values(&mdp, &pi, &r, &v).unwrap();
        assert!((q.values.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((expected_return(&v, &[0.5, 0.5]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn q_values_examples() {
        let mdp = TabularMdp::new(1, 3, vec![1.0; 3], vec![1.0], 0.0).unwrap();
        let r = RewardTable::with_tight_bound(1, 3, RewardLayout::StateAction, vec![0.1, 0.2, 0.3]).unwrap();
        let pi = StationaryPolicy::uniform(1, 3);
        let v = evaluate_policy(&mdp, &pi, &r, 1e-9).unwrap();
        let q = q_values(&mdp, &pi, &r, &v).unwrap();
        assert_eq!(q.values.row(0), expected_reward(&mdp, &r).unwrap().row(0));

        let (chain, r) = chain(0.9);
        let pi = StationaryPolicy::uniform(2, 1);
        let v = evaluate_policy(&chain, &pi, &r, 1e-12).unwrap();
        let q = q_values(&chain, &pi, &r, &v).unwrap();
        for s in 0..2 {
            assert!((q.values.get(s, 0) - v.values[s]).abs() < 1e-11);
        }
    }

    #[test]
    fn advantage_examples() {
        let q = QFunction { values: StateActionValues::new(1, 2, vec![1.0, 0.0]).unwrap() };
        let rho = advantages(&q, &StationaryPolicy::uniform(1, 2)).unwrap();
        assert_eq!(rho.values.row(0), &[0.5, -0.5]);
        let det = StationaryPolicy::deterministic(2, &[0]).unwrap();
        let rho = advantages(&q, &det).unwrap();
        assert_eq!(rho.values.get(0, 0), 0.0);
    }

    #[test]
    fn expected_return_point_mass() {
        let v = ValueFunction { values: vec![0.3, -0.2], residual: 0.0 };
        assert_eq!(expected_return(&v, &[0.0, 1.0]), -0.2);
    }

    #[test]
    fn state_distribution_examples() {
        // single self-looping state
        let one = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.9).unwrap();
        let d = discounted_state_distribution(&one, &StationaryPolicy::uniform(1, 1), &[1.0], 1e-10).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-9);

        let (mdp, _) = chain(0.5);
        let pi = StationaryPolicy::uniform(2, 1);
        let d = discounted_state_distribution(&mdp, &pi, &[1.0, 0.0], 1e-12).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-11 && (d[1] - 0.5).abs() < 1e-11);

        let (mdp0, _) = chain(0.0);
        let d = discounted_state_distribution(&mdp0, &pi, &[0.3, 0.7], 1e-12).unwrap();
        assert_eq!(d, vec![0.3, 0.7]);
    }

    #[test]
    fn optimal_policy_takes_argmax_and_first_tie() {
        let mdp = TabularMdp::new(1, 3, vec![1.0; 3], vec![1.0], 0.0).unwrap();
        let r = RewardTable::with_tight_bound(1, 3, RewardLayout::StateAction, vec![0.0, 1.0, 0.0]).unwrap();
        let (pi, v) = optimal_policy(&mdp, &r, 1e-9).unwrap();
        assert_eq!(pi.row(0), &[0.0, 1.0, 0.0]);
        assert_eq!(v.values[0], 1.0);

        let mdp = TabularMdp::new(1, 6, vec![1.0; 6], vec![1.0], 0.0).unwrap();
        let r = RewardTable::with_tight_bound(
            1,
            6,
            RewardLayout::StateAction,
            vec![0.0, 0.1, 0.7, 0.2, 0.3, 0.7],
        )
        .unwrap();
        let (pi, _) = optimal_policy(&mdp, &r, 1e-9).unwrap();
        assert_eq!(pi.prob(0, 2), 1.0);
    }

    #[test]
    fn sweep_cap_reports_residual() {
        // a self-loop converges geometrically, never in finitely many sweeps
        let mdp = TabularMdp::new(1, 1, vec![1.0], vec![1.0], 0.99).unwrap();
        let r = RewardTable::constant(1, 1, 1.0);
        let err = evaluate_policy_capped(&mdp, &StationaryPolicy::uniform(1, 1), &r, 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { sweeps: 3, .. }));
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let (mdp, r) = chain(0.5);
        assert!(evaluate_policy(&mdp, &StationaryPolicy::uniform(2, 1), &r, 0.0).is_err());
    }
}
