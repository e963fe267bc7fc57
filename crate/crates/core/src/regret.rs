//! Regret matching: a per-state no-regret learner that plays actions in
//! proportion to their positive cumulative regret.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegretMatcher {
    cumulative_regret: Vec<f64>,
    iterations_seen: usize,
}

impl RegretMatcher {
    pub fn new(n_actions: usize) -> Self {
        assert!(n_actions > 0, "a matcher needs at least one action");
        RegretMatcher { cumulative_regret: vec![0.0; n_actions], iterations_seen: 0 }
    }

    /// Matcher with given cumulative regrets, e.g. restored from a checkpoint.
    pub fn from_regrets(cumulative_regret: Vec<f64>, iterations_seen: usize) -> Self {
        assert!(!cumulative_regret.is_empty());
        RegretMatcher { cumulative_regret, iterations_seen }
    }

    pub fn n_actions(&self) -> usize {
        self.cumulative_regret.len()
    }

    pub fn cumulative_regret(&self) -> &[f64] {
        &self.cumulative_regret
    }

    pub fn iterations_seen(&self) -> usize {
        self.iterations_seen
    }

    /// Largest cumulative regret over actions.
    pub fn max_regret(&self) -> f64 {
        self.cumulative_regret.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes the current action distribution into `out`.
    pub fn write_policy(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.n_actions());
        let total: f64 = self.cumulative_regret.iter().map(|r| r.max(0.0)).sum();
        if total > 0.0 {
            for (o, r) in out.iter_mut().zip(&self.cumulative_regret) {
                *o = r.max(0.0) / total;
            }
        } else {
            out.fill(1.0 / self.n_actions() as f64);
        }
    }

    /// Distribution proportional to the positive parts of the cumulative
    /// regrets; uniform when none is positive.
    pub fn current_policy(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions()];
        self.write_policy(&mut out);
        out
    }

    /// Adds `q(a) - <policy, q>` to each action's regret. `policy_row` must be
    /// the distribution this matcher emitted for the iteration.
    pub fn observe(&mut self, q_row: &[f64], policy_row: &[f64]) -> Result<()> {
        let n = self.n_actions();
        if q_row.len() != n || policy_row.len() != n {
            return Err(Error::shape(format!(
                "matcher has {n} actions, got q-row of {} and policy row of {}",
                q_row.len(),
                policy_row.len()
            )));
        }
        let value: f64 = q_row.iter().zip(policy_row).map(|(q, p)| q * p).sum();
        for (r, q) in self.cumulative_regret.iter_mut().zip(q_row) {
            *r += q - value;
        }
        self.iterations_seen += 1;
        Ok(())
    }
}

/// Regret-matching bound `2U sqrt(|A| T)` for payoffs in `[-U, U]`.
pub fn regret_bound(reward_bound: f64, n_actions: usize, iterations: usize) -> f64 {
    2.0 * reward_bound * ((n_actions * iterations) as f64).sqrt()
}
