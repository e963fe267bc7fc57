//! k-of-N counterfactual regret minimization over an ensemble belief.
//!
//! Each iteration evaluates the current policy `π^t` under `N` reward tables
//! drawn from the belief, averages the `k` tables under which `π^t` does
//! worst into `r̄^t`, and feeds the resulting q-values `q_s(·, π^t; r̄^t)` to
//! one regret matcher per state. Expected returns stand in for
//! counterfactual values, which is sound because transitions are known.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;

use crate::belief::RewardEnsemble;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate_policy_capped, expected_return, optimal_policy, q_values, EvalMethod, PolicyEvaluator,
    QFunction, ValueFunction,
};
use crate::mdp::{RewardTable, StationaryPolicy, TabularMdp};
use crate::regret::RegretMatcher;
use crate::rng::{stream_rng, Stream};

/// Which policy a run reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    /// `π^T`, the last policy evaluated and trained on.
    Last,
    /// The snapshot with the highest estimated k-of-N value.
    Best,
    /// A uniformly drawn snapshot.
    Sampled,
}

impl OutputMode {
    pub fn name(self) -> &'static str {
        match self {
            OutputMode::Last => "last",
            OutputMode::Best => "best",
            OutputMode::Sampled => "sampled",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "last" => Some(OutputMode::Last),
            "best" => Some(OutputMode::Best),
            "sampled" => Some(OutputMode::Sampled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KofnConfig {
    pub k: usize,
    pub n: usize,
    pub iterations: usize,
    pub eval: EvalMethod,
    pub output_mode: OutputMode,
    pub seed: u64,
    /// Keep every `stride`-th policy; `None` picks 1 for runs of at most 200
    /// iterations and `ceil(T / 200)` otherwise.
    pub snapshot_stride: Option<usize>,
    /// Monte-Carlo repetitions per snapshot when `output_mode` is `Best`.
    pub value_repetitions: usize,
}

impl KofnConfig {
    pub fn new(k: usize, n: usize, iterations: usize) -> Self {
        KofnConfig {
            k,
            n,
            iterations,
            eval: EvalMethod::Direct,
            output_mode: OutputMode::Last,
            seed: 0,
            snapshot_stride: None,
            value_repetitions: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > self.n {
            return Err(Error::config(format!("need 1 <= k <= N (got k={}, N={})", self.k, self.n)));
        }
        if self.iterations == 0 {
            return Err(Error::config("need at least one iteration"));
        }
        if self.snapshot_stride == Some(0) {
            return Err(Error::config("snapshot stride must be positive"));
        }
        if let EvalMethod::Iterative { tol, .. } = self.eval {
            if !(tol > 0.0) {
                return Err(Error::config("evaluation tolerance must be positive"));
            }
        }
        if self.output_mode == OutputMode::Best && self.value_repetitions == 0 {
            return Err(Error::config("best-policy selection needs value repetitions"));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.snapshot_stride.unwrap_or(if self.iterations <= 200 {
            1
        } else {
            self.iterations.div_ceil(200)
        })
    }
}

/// One k-of-N CFR iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Ensemble positions of the `N` sampled tables, in sample order.
    pub sampled: Vec<usize>,
    /// `v_∅(π^t; r_j)` for each sampled table.
    pub returns: Vec<f64>,
    /// Sample positions (indices into `sampled`) of the `k` worst tables,
    /// worst first.
    pub selected: Vec<usize>,
    /// `v_∅(π^t; r̄^t)`.
    pub mixed_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KofnRunRecord {
    pub k: usize,
    pub n: usize,
    pub iterations: Vec<IterationRecord>,
    pub snapshot_stride: usize,
    /// `(t, π^t)` pairs.
    pub snapshots: Vec<(usize, StationaryPolicy)>,
    /// Iteration whose policy was returned.
    pub output_iteration: usize,
}

impl KofnRunRecord {
    /// Mean of the `k` selected returns for each iteration.
    pub fn selected_means(&self) -> Vec<f64> {
        self.iterations
            .iter()
            .map(|it| it.selected.iter().map(|&j| it.returns[j]).sum::<f64>() / it.selected.len() as f64)
            .collect()
    }

    /// Tab-separated log, one line per iteration:
    /// `iteration  sampled  selected  mixed_return`, index lists comma-joined.
    pub fn to_log(&self) -> String {
        let mut out = String::from("# iteration\tsampled\tselected\tmixed_return\n");
        for it in &self.iterations {
            let join = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:?}",
                it.iteration,
                join(&it.sampled),
                join(&it.selected),
                it.mixed_return
            );
        }
        out
    }
}

/// One parsed log line: `(iteration, sampled, selected, mixed_return)`.
pub type LogLine = (usize, Vec<usize>, Vec<usize>, f64);

pub fn parse_log(text: &str) -> Result<Vec<LogLine>> {
    let err = |line: usize, msg: &str| Error::Parse { what: "run log", line, msg: msg.into() };
    let list = |s: &str, line: usize| -> Result<Vec<usize>> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|x| x.parse().map_err(|_| err(line, "bad index"))).collect()
    };
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if l.starts_with('#') || l.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 4 {
            return Err(err(i + 1, "expected 4 tab-separated fields"));
        }
        out.push((
            f[0].parse().map_err(|_| err(i + 1, "bad iteration"))?,
            list(f[1], i + 1)?,
            list(f[2], i + 1)?,
            f[3].parse().map_err(|_| err(i + 1, "bad return"))?,
        ));
    }
    Ok(out)
}

/// Positions of the `k` lowest returns, worst first; ties go to the earlier
/// sample position.
pub fn select_worst(returns: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > returns.len() {
        return Err(Error::config(format!("k = {k} exceeds N = {}", returns.len())));
    }
    let mut order: Vec<usize> = (0..returns.len()).collect();
    // stable sort keeps sample order among equal returns
    order.sort_by(|&a, &b| returns[a].partial_cmp(&returns[b]).unwrap_or(Ordering::Equal));
    order.truncate(k);
    Ok(order)
}

/// Averages the `k` tables with the lowest returns. Returns the mixed table
/// and the selected positions, worst first.
pub fn rank_and_mix(rewards: &[&RewardTable], returns: &[f64], k: usize) -> Result<(RewardTable, Vec<usize>)> {
    if rewards.len() != returns.len() {
        return Err(Error::shape(format!(
            "{} reward tables but {} returns",
            rewards.len(),
            returns.len()
        )));
    }
    if k == 0 {
        return Err(Error::config("k must be positive"));
    }
    let selected = select_worst(returns, k)?;
    let mixed = RewardTable::mean(selected.iter().map(|&j| rewards[j]))?;
    Ok((mixed, selected))
}

fn current_policy(matchers: &[RegretMatcher], n_actions: usize) -> StationaryPolicy {
    let mut probs = vec![0.0; matchers.len() * n_actions];
    for (m, row) in matchers.iter().zip(probs.chunks_mut(n_actions)) {
        m.write_policy(row);
    }
    StationaryPolicy::from_rows_unchecked(matchers.len(), n_actions, probs)
}

/// Evaluation of a single policy under many rewards, by either method.
enum Evaluation<'a> {
    Direct(PolicyEvaluator<'a>),
    Iterative { mdp: &'a TabularMdp, policy: &'a StationaryPolicy, tol: f64, max_sweeps: usize },
}

impl<'a> Evaluation<'a> {
    fn new(mdp: &'a TabularMdp, policy: &'a StationaryPolicy, method: EvalMethod) -> Result<Self> {
        Ok(match method {
            EvalMethod::Direct => Evaluation::Direct(PolicyEvaluator::new(mdp, policy)?),
            EvalMethod::Iterative { tol, max_sweeps } => Evaluation::Iterative { mdp, policy, tol, max_sweeps },
        })
    }

    fn values(&self, reward: &RewardTable) -> Result<ValueFunction> {
        match self {
            Evaluation::Direct(e) => e.evaluate(reward),
            Evaluation::Iterative { mdp, policy, tol, max_sweeps } => {
                evaluate_policy_capped(mdp, policy, reward, *tol, *max_sweeps)
            }
        }
    }

    fn q_values(&self, reward: &RewardTable) -> Result<(ValueFunction, QFunction)> {
        match self {
            Evaluation::Direct(e) => e.q_values(reward),
            Evaluation::Iterative { mdp, policy, .. } => {
                let v = self.values(reward)?;
                let q = q_values(mdp, policy, reward, &v)?;
                Ok((v, q))
            }
        }
    }
}

/// Runs k-of-N CFR for `config.iterations` iterations, drawing `N` tables
/// per iteration from `belief`.
pub fn run(
    mdp: &TabularMdp,
    belief: &mut RewardEnsemble,
    config: &KofnConfig,
) -> Result<(StationaryPolicy, KofnRunRecord)> {
    config.validate()?;
    mdp.ensure_valid()?;
    if belief.n_states() != mdp.n_states() || belief.n_actions() != mdp.n_actions() {
        return Err(Error::shape(format!(
            "belief is {}x{}, MDP is {}x{}",
            belief.n_states(),
            belief.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let n_actions = mdp.n_actions();
    let initial = mdp.initial_dist();
    let stride = config.stride();
    let mut matchers = vec![RegretMatcher::new(n_actions); mdp.n_states()];
    let mut iterations = Vec::with_capacity(config.iterations);
    let mut snapshots = Vec::new();
    let mut last_policy = None;

    for t in 1..=config.iterations {
        let policy = current_policy(&matchers, n_actions);
        let evaluation = Evaluation::new(mdp, &policy, config.eval)?;
        let sampled = belief.draw_indices(config.n)?;
        let tables: Vec<&RewardTable> = sampled.iter().map(|&i| belief.member(i)).collect();
        let returns = tables
            .iter()
            .map(|r| evaluation.values(r).map(|v| expected_return(&v, initial)))
            .collect::<Result<Vec<f64>>>()?;
        let (mixed, selected) = rank_and_mix(&tables, &returns, config.k)?;
        let (mixed_values, q) = evaluation.q_values(&mixed)?;
        let mixed_return = expected_return(&mixed_values, initial);

        for (s, m) in matchers.iter_mut().enumerate() {
            m.observe(q.values.row(s), policy.row(s))?;
        }
        iterations.push(IterationRecord { iteration: t, sampled, returns, selected, mixed_return });
        if (t - 1) % stride == 0 || t == config.iterations {
            snapshots.push((t, policy.clone()));
        }
        last_policy = Some(policy);
    }
    let last_policy = last_policy.expect("at least one iteration");

    let (output_iteration, output) = match config.output_mode {
        OutputMode::Last => (config.iterations, last_policy),
        OutputMode::Sampled => {
            let mut rng = stream_rng(config.seed, Stream::Select);
            let (t, p) = &snapshots[rng.gen_range(0..snapshots.len())];
            (*t, p.clone())
        }
        OutputMode::Best => {
            let mut best: Option<(f64, usize)> = None;
            for (i, (_, p)) in snapshots.iter().enumerate() {
                let est = kofn_value(mdp, p, belief, config.k, config.n, config.value_repetitions, config.seed)?;
                if best.map_or(true, |(b, _)| est.mean > b) {
                    best = Some((est.mean, i));
                }
            }
            let (t, p) = &snapshots[best.expect("nonempty snapshots").1];
            (*t, p.clone())
        }
    };
    let record = KofnRunRecord {
        k: config.k,
        n: config.n,
        iterations,
        snapshot_stride: stride,
        snapshots,
        output_iteration,
    };
    Ok((output, record))
}

/// Monte-Carlo estimate of a policy's k-of-N value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KofnValue {
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates the expected mean of the `k` worst returns among `n` tables
/// drawn with replacement from `belief`, over `repetitions` draws.
pub fn kofn_value(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    belief: &RewardEnsemble,
    k: usize,
    n: usize,
    repetitions: usize,
    seed: u64,
) -> Result<KofnValue> {
    if k == 0 || k > n {
        return Err(Error::config(format!("need 1 <= k <= N (got k={k}, N={n})")));
    }
    if repetitions == 0 {
        return Err(Error::config("need at least one repetition"));
    }
    let evaluator = PolicyEvaluator::new(mdp, policy)?;
    let member_returns = belief
        .members()
        .map(|r| evaluator.expected_return(r))
        .collect::<Result<Vec<f64>>>()?;
    Ok(kofn_value_from_returns(&member_returns, k, n, repetitions, seed))
}

/// [`kofn_value`] given each member's return for the policy.
pub fn kofn_value_from_returns(
    member_returns: &[f64],
    k: usize,
    n: usize,
    repetitions: usize,
    seed: u64,
) -> KofnValue {
    let mut rng = stream_rng(seed, Stream::Value);
    let mut sample = vec![0.0; n];
    let estimates: Vec<f64> = (0..repetitions)
        .map(|_| {
            for x in sample.iter_mut() {
                *x = member_returns[rng.gen_range(0..member_returns.len())];
            }
            sample.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
            sample[..k].iter().sum::<f64>() / k as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / repetitions as f64;
    let std_error = if repetitions > 1 {
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (repetitions - 1) as f64;
        (var / repetitions as f64).sqrt()
    } else {
        0.0
    };
    KofnValue { mean, std_error }
}

/// Policy that regret is measured against.
#[derive(Debug, Clone)]
pub enum Competitor {
    Policy(StationaryPolicy),
    /// The best fixed deterministic policy in hindsight over the whole run.
    BestDeterministic,
}

/// Cumulative sampled regret `Σ_{t<=τ} v_∅(π; r̄^t) - v_∅(π^t; r̄^t)` for each
/// prefix `τ`. `belief` must hold its members in the order used by the run.
pub fn regret_curve(
    record: &KofnRunRecord,
    mdp: &TabularMdp,
    belief: &RewardEnsemble,
    competitor: &Competitor,
) -> Result<Vec<f64>> {
    if record.snapshot_stride != 1 || record.snapshots.len() != record.iterations.len() {
        return Err(Error::MissingSnapshots { stride: record.snapshot_stride });
    }
    let mixed = record
        .iterations
        .iter()
        .map(|it| RewardTable::mean(it.selected.iter().map(|&j| belief.member(it.sampled[j]))))
        .collect::<Result<Vec<_>>>()?;
    let competitor = match competitor {
        Competitor::Policy(p) => p.clone(),
        Competitor::BestDeterministic => {
            // Σ_t v(π; r̄^t) = T v(π; mean_t r̄^t), so the hindsight-best
            // deterministic policy is optimal for the averaged reward
            let avg = RewardTable::mean(mixed.iter())?;
            optimal_policy(mdp, &avg, 1e-12)?.0
        }
    };
    let evaluator = PolicyEvaluator::new(mdp, &competitor)?;
    let mut total = 0.0;
    let mut curve = Vec::with_capacity(mixed.len());
    for (it, r) in record.iterations.iter().zip(&mixed) {
        total += evaluator.expected_return(r)? - it.mixed_return;
        curve.push(total);
    }
    Ok(curve)
}
