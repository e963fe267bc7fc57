//! Finite discounted MDPs, reward tables over `(state, action, next_state)`
//! triples, and stationary policies.
//!
//! All three types are immutable after construction. Constructors check
//! shapes; probability invariants of an MDP are checked by [`validate_mdp`],
//! which reports every violation instead of failing on the first.

pub mod format;

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance used when checking that probability vectors sum to one.
pub const PROB_TOL: f64 = 1e-12;

/// A finite discounted MDP with a dense transition tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed `(s * n_actions + a) * n_states + s'`.
    transition: Vec<f64>,
    initial: Vec<f64>,
    discount: f64,
    /// Nonzero entries of each `(s, a)` transition row, in `s'` order.
    support: Vec<Vec<(usize, f64)>>,
}

impl TabularMdp {
    /// Builds an MDP from a dense row-major transition tensor. Only shapes are
    /// checked here; see [`validate_mdp`] for the probability invariants.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::shape("an MDP needs at least one state and one action"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::shape(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if initial.len() != n_states {
            return Err(Error::shape(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        let support = transition
            .chunks(n_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(s, &p)| (s, p))
                    .collect()
            })
            .collect();
        Ok(TabularMdp { n_states, n_actions, transition, initial, discount, support })
    }

    /// Builds an MDP from sparse `(next_state, probability)` rows, one per
    /// `(s, a)` pair in row-major order. Repeated next states are summed.
    pub fn from_sparse(
        n_states: usize,
        n_actions: usize,
        rows: &[Vec<(usize, f64)>],
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if rows.len() != n_states * n_actions {
            return Err(Error::shape(format!(
                "{} sparse rows given, expected {}",
                rows.len(),
                n_states * n_actions
            )));
        }
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for (i, row) in rows.iter().enumerate() {
            for &(next, p) in row {
                if next >= n_states {
                    return Err(Error::IndexOutOfRange { index: next, len: n_states });
                }
                transition[i * n_states + next] += p;
            }
        }
        Self::new(n_states, n_actions, transition, initial, discount)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + next]
    }

    /// Dense transition row `p(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Nonzero entries of `p(· | s, a)`.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.support[s * self.n_actions + a]
    }

    pub(crate) fn raw_transition(&self) -> &[f64] {
        &self.transition
    }

    /// Same dynamics with a different initial distribution.
    pub fn with_initial_dist(&self, initial: Vec<f64>) -> Result<Self> {
        if initial.len() != self.n_states {
            return Err(Error::shape("initial distribution length differs from state count"));
        }
        Ok(TabularMdp { initial, ..self.clone() })
    }

    pub fn validate(&self) -> ValidationReport {
        validate_mdp(self)
    }

    /// Fails with [`Error::InvalidMdp`] listing the first few violations.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidMdp(report.to_string()))
        }
    }
}

/// A single broken invariant found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TransitionSum { state: usize, action: usize, sum: f64 },
    NegativeTransition { state: usize, action: usize, next: usize, value: f64 },
    InitialSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
    Discount { value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TransitionSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeTransition { state, action, next, value } => {
                write!(f, "p({next} | {state}, {action}) = {value} is negative")
            }
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "initial probability of state {state} is negative ({value})")
            }
            Violation::Discount { value } => {
                write!(f, "discount must be < 1 and >= 0 (got {value})")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().take(5).enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        if self.violations.len() > 5 {
            write!(f, "; and {} more", self.violations.len() - 5)?;
        }
        Ok(())
    }
}

fn is_distribution_sum(sum: f64) -> bool {
    (sum - 1.0).abs() <= PROB_TOL
}

/// Checks every probability invariant of `mdp` and reports all violations.
pub fn validate_mdp(mdp: &TabularMdp) -> ValidationReport {
    let mut violations = Vec::new();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = mdp.transition_row(s, a);
            for (next, &value) in row.iter().enumerate() {
                if !(value >= 0.0) {
                    violations.push(Violation::NegativeTransition { state: s, action: a, next, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if !is_distribution_sum(sum) {
                violations.push(Violation::TransitionSum { state: s, action: a, sum });
            }
        }
    }
    for (state, &value) in mdp.initial.iter().enumerate() {
        if !(value >= 0.0) {
            violations.push(Violation::NegativeInitial { state, value });
        }
    }
    let sum: f64 = mdp.initial.iter().sum();
    if !is_distribution_sum(sum) {
        violations.push(Violation::InitialSum { sum });
    }
    if !(0.0..1.0).contains(&mdp.discount) {
        violations.push(Violation::Discount { value: mdp.discount });
    }
    ValidationReport { violations }
}

/// How a [`RewardTable`] stores its values. Every layout answers
/// [`RewardTable::get`] for all `(s, a, s')` triples; the factored layouts
/// store rewards that ignore one of the indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewardLayout {
    /// Indexed `(s, a, s')`.
    Full,
    /// Indexed `(s, a)`; constant over the next state.
    StateAction,
    /// Indexed `(s, s')`; constant over the action.
    StatePair,
}

impl RewardLayout {
    pub fn len(self, n_states: usize, n_actions: usize) -> usize {
        match self {
            RewardLayout::Full => n_states * n_actions * n_states,
            RewardLayout::StateAction => n_states * n_actions,
            RewardLayout::StatePair => n_states * n_states,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RewardLayout::Full => "full",
            RewardLayout::StateAction => "state-action",
            RewardLayout::StatePair => "state-pair",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(RewardLayout::Full),
            "state-action" => Some(RewardLayout::StateAction),
            "state-pair" => Some(RewardLayout::StatePair),
            _ => None,
        }
    }
}

/// A bounded reward function `r(s, a, s')` with `|r| <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    n_states: usize,
    n_actions: usize,
    layout: RewardLayout,
    values: Vec<f64>,
    bound: f64,
}

impl RewardTable {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        layout: RewardLayout,
        values: Vec<f64>,
        bound: f64,
    ) -> Result<Self> {
        let expected = layout.len(n_states, n_actions);
        if values.len() != expected {
            return Err(Error::shape(format!(
                "{} reward table has {} values, expected {expected}",
                layout.name(),
                values.len()
            )));
        }
        if !(bound >= 0.0) || !bound.is_finite() {
            return Err(Error::config(format!("reward bound must be finite and >= 0 (got {bound})")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.abs() <= bound)) {
            return Err(Error::config(format!(
                "reward entry {i} = {v} exceeds the bound {bound}"
            )));
        }
        Ok(RewardTable { n_states, n_actions, layout, values, bound })
    }

    /// Like [`RewardTable::new`] with the bound set to the largest magnitude.
    pub fn with_tight_bound(
        n_states: usize,
        n_actions: usize,
        layout: RewardLayout,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bound = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Self::new(n_states, n_actions, layout, values, bound)
    }

    /// Reward `c` on every triple.
    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        RewardTable {
            n_states,
            n_actions,
            layout: RewardLayout::StateAction,
            values: vec![c; n_states * n_actions],
            bound: c.abs(),
        }
    }

    /// Full-layout table from a function of `(s, a, s')`.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_states * n_actions * n_states);
        for s in 0..n_states {
            for a in 0..n_actions {
                for next in 0..n_states {
                    values.push(f(s, a, next));
                }
            }
        }
        Self::with_tight_bound(n_states, n_actions, RewardLayout::Full, values)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn layout(&self) -> RewardLayout {
        self.layout
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Raw storage in the table's layout order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize, next: usize) -> f64 {
        match self.layout {
            RewardLayout::Full => self.values[(s * self.n_actions + a) * self.n_states + next],
            RewardLayout::StateAction => self.values[s * self.n_actions + a],
            RewardLayout::StatePair => self.values[s * self.n_states + next],
        }
    }

    /// Same rewards in the `Full` layout.
    pub fn to_full(&self) -> RewardTable {
        if self.layout == RewardLayout::Full {
            return self.clone();
        }
        let mut values = Vec::with_capacity(RewardLayout::Full.len(self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for next in 0..self.n_states {
                    values.push(self.get(s, a, next));
                }
            }
        }
        RewardTable { layout: RewardLayout::Full, values, ..*self }
    }

    /// Sub-table over `states` (both the current and the next state are
    /// re-indexed into `states`).
    pub fn restrict(&self, states: &[usize]) -> Result<RewardTable> {
        if let Some(&bad) = states.iter().find(|&&s| s >= self.n_states) {
            return Err(Error::IndexOutOfRange { index: bad, len: self.n_states });
        }
        let n = states.len();
        let values = match self.layout {
            RewardLayout::Full => {
                let mut v = Vec::with_capacity(n * self.n_actions * n);
                for &s in states {
                    for a in 0..self.n_actions {
                        v.extend(states.iter().map(|&next| self.get(s, a, next)));
                    }
                }
                v
            }
            RewardLayout::StateAction => states
                .iter()
                .flat_map(|&s| self.values[s * self.n_actions..(s + 1) * self.n_actions].iter().copied())
                .collect(),
            RewardLayout::StatePair => states
                .iter()
                .flat_map(|&s| states.iter().map(move |&next| (s, next)))
                .map(|(s, next)| self.values[s * self.n_states + next])
                .collect(),
        };
        Ok(RewardTable { n_states: n, values, ..*self })
    }

    pub fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states != n_states || self.n_actions != n_actions {
            return Err(Error::shape(format!(
                "reward table is {}x{}, expected {n_states}x{n_actions}",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Elementwise mean. The result keeps the common layout when all inputs
    /// share one and falls back to `Full` otherwise; its bound is the largest
    /// input bound.
    pub fn mean<'a>(tables: impl IntoIterator<Item = &'a RewardTable>) -> Result<RewardTable> {
        let tables: Vec<&RewardTable> = tables.into_iter().collect();
        let first = *tables.first().ok_or(Error::EmptyEnsemble)?;
        for t in &tables[1..] {
            t.check_shape(first.n_states, first.n_actions)?;
        }
        let same_layout = tables.iter().all(|t| t.layout == first.layout);
        let scale = 1.0 / tables.len() as f64;
        let bound = tables.iter().fold(0.0_f64, |m, t| m.max(t.bound));
        let values = if same_layout {
            let mut acc = vec![0.0; first.values.len()];
            for t in &tables {
                for (a, v) in acc.iter_mut().zip(&t.values) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            acc
        } else {
            let mut acc = vec![0.0; RewardLayout::Full.len(first.n_states, first.n_actions)];
            for t in &tables {
                for (a, v) in acc.iter_mut().zip(t.to_full().values) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a *= scale);
            acc
        };
        let layout = if same_layout { first.layout } else { RewardLayout::Full };
        // rounding can push a mean of bounded values a hair past the bound
        let values = values.into_iter().map(|v| v.clamp(-bound, bound)).collect();
        Ok(RewardTable { n_states: first.n_states, n_actions: first.n_actions, layout, values, bound })
    }
}

/// A stationary policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StationaryPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(Error::shape(format!(
                "policy has {} entries, expected {}x{n_actions}",
                probs.len(),
                n_states
            )));
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || !is_distribution_sum(sum) {
                return Err(Error::config(format!(
                    "policy row {s} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(StationaryPolicy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        StationaryPolicy {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::IndexOutOfRange { index: a, len: n_actions });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(StationaryPolicy { n_states: actions.len(), n_actions, probs })
    }

    /// Policy from rows that are already distributions, e.g. regret-matching
    /// output. Rows are not re-checked.
    pub(crate) fn from_rows_unchecked(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        StationaryPolicy { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Concatenates per-state rows taken from single-state policies.
    pub fn stack(rows: &[StationaryPolicy]) -> Result<Self> {
        let n_actions = rows.first().map(|p| p.n_actions).ok_or_else(|| Error::shape("no rows"))?;
        let mut probs = Vec::new();
        for p in rows {
            if p.n_actions != n_actions {
                return Err(Error::shape("policies disagree on the action count"));
            }
            probs.extend_from_slice(&p.probs);
        }
        Ok(StationaryPolicy { n_states: probs.len() / n_actions, n_actions, probs })
    }

    pub fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.n_states != n_states || self.n_actions != n_actions {
            return Err(Error::shape(format!(
                "policy is {}x{}, expected {n_states}x{n_actions}",
                self.n_states, self.n_actions
            )));
        }
        Ok(())
    }
}

/// Uniform random policy over the MDP's actions.
pub fn uniform_policy(mdp: &TabularMdp) -> StationaryPolicy {
    StationaryPolicy::uniform(mdp.n_states, mdp.n_actions)
}

/// Row-major `(state, action)` matrix of reals.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionValues {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl StateActionValues {
    pub fn new(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::shape("state-action matrix has the wrong length"));
        }
        Ok(StateActionValues { n_states, n_actions, data })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        StateActionValues { n_states, n_actions, data: vec![0.0; n_states * n_actions] }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.data[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `R(s, a) = Σ_{s'} p(s' | s, a) r(s, a, s')`.
pub fn expected_reward(mdp: &TabularMdp, reward: &RewardTable) -> Result<StateActionValues> {
    reward.check_shape(mdp.n_states, mdp.n_actions)?;
    let mut out = StateActionValues::zeros(mdp.n_states, mdp.n_actions);
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            out.data[s * mdp.n_actions + a] = match reward.layout {
                RewardLayout::StateAction => {
                    // rows sum to one, so the marginal is the stored value
                    let total: f64 = mdp.successors(s, a).iter().map(|&(_, p)| p).sum();
                    reward.values[s * mdp.n_actions + a] * total
                }
                _ => mdp
                    .successors(s, a)
                    .iter()
                    .map(|&(next, p)| p * reward.get(s, a, next))
                    .sum(),
            };
        }
    }
    Ok(out)
}
