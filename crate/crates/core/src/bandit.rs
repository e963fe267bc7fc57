//! Contextual-bandit caution tasks as `γ = 0` MDPs over enumerated contexts.
//!
//! Contexts are synthetic Gaussian clusters standing in for labelled images:
//! familiar contexts come from per-class clusters, novel contexts from the
//! same clusters displaced by `novel_shift` along a random direction. Novel
//! contexts carry no label and so no reward.

use std::path::Path;

use rand::seq::SliceRandom;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::belief::RewardEnsemble;
use crate::error::{Error, Result};
use crate::kofn::{run, KofnConfig};
use crate::mdp::{RewardLayout, RewardTable, StationaryPolicy, TabularMdp};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::trainer::{perturb_targets, Example};

/// Standard deviation of the one-off target noise in the perturbed task.
pub const PERTURBED_NOISE: f64 = 0.1;
/// Reward of the help action in the ask-for-help tasks.
pub const HELP_REWARD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BanditKind {
    /// Classify, or ask for help for a small sure reward.
    AskForHelp,
    /// Higher labels pay more when right and cost more when wrong.
    RiskReward,
    /// Risk-reward classification plus a help action that is only good when
    /// help is available.
    HelpAvailability,
    /// Ask-for-help with noisy training targets.
    PerturbedHelp,
}

impl BanditKind {
    pub const ALL: [BanditKind; 4] =
        [BanditKind::AskForHelp, BanditKind::RiskReward, BanditKind::HelpAvailability, BanditKind::PerturbedHelp];

    pub fn name(self) -> &'static str {
        match self {
            BanditKind::AskForHelp => "ask_for_help",
            BanditKind::RiskReward => "risk_reward",
            BanditKind::HelpAvailability => "help_availability",
            BanditKind::PerturbedHelp => "perturbed_help",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        BanditKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub features: Vec<f64>,
    /// Correct class; `None` for novel contexts.
    pub label: Option<usize>,
    pub help_available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditTaskSpec {
    pub kind: BanditKind,
    pub n_classes: usize,
}

impl BanditTaskSpec {
    pub fn new(kind: BanditKind, n_classes: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::config("a bandit task needs at least two classes"));
        }
        Ok(BanditTaskSpec { kind, n_classes })
    }

    pub fn n_actions(&self) -> usize {
        self.n_classes + usize::from(self.help_action().is_some())
    }

    /// The help action, always the last one, if the task has it.
    pub fn help_action(&self) -> Option<usize> {
        match self.kind {
            BanditKind::RiskReward => None,
            _ => Some(self.n_classes),
        }
    }

    fn classification_reward(&self, label: usize, a: usize) -> f64 {
        let n = self.n_classes as f64;
        match self.kind {
            BanditKind::AskForHelp | BanditKind::PerturbedHelp => f64::from(u8::from(a == label)),
            BanditKind::RiskReward | BanditKind::HelpAvailability => {
                if a == label {
                    a as f64 + 1.0
                } else {
                    -(a as f64 + 2.0) / (n - 1.0)
                }
            }
        }
    }

    /// Rewards of every action for a context of class `label`.
    pub fn reward_row(&self, label: usize, help_available: bool) -> Result<Vec<f64>> {
        if label >= self.n_classes {
            return Err(Error::IndexOutOfRange { index: label, len: self.n_classes });
        }
        let n = self.n_classes as f64;
        let mut row: Vec<f64> = (0..self.n_classes).map(|a| self.classification_reward(label, a)).collect();
        match self.kind {
            BanditKind::RiskReward => {}
            BanditKind::AskForHelp | BanditKind::PerturbedHelp => row.push(HELP_REWARD),
            BanditKind::HelpAvailability => row.push(if help_available { 1.0 / (2.0 * n) } else { -(n + 1.0) / (n - 1.0) }),
        }
        Ok(row)
    }

    pub fn reward(&self, context: &Context, action: usize) -> Result<f64> {
        let label = context.label.ok_or(Error::NovelReward)?;
        let row = self.reward_row(label, context.help_available)?;
        row.get(action).copied().ok_or(Error::IndexOutOfRange { index: action, len: row.len() })
    }

    /// Model input for a context: its features, plus the help flag when the
    /// task depends on it.
    pub fn features(&self, context: &Context) -> Vec<f64> {
        let mut x = context.features.clone();
        if self.kind == BanditKind::HelpAvailability {
            x.push(f64::from(u8::from(context.help_available)));
        }
        x
    }

    /// Per-output loss weights `1 / (a + 1)²` on classification actions for
    /// the tasks whose rewards grow with the label.
    pub fn output_weights(&self) -> Option<Vec<f64>> {
        match self.kind {
            BanditKind::RiskReward | BanditKind::HelpAvailability => {
                let mut w: Vec<f64> = (0..self.n_classes).map(|a| 1.0 / ((a + 1) as f64).powi(2)).collect();
                if self.help_action().is_some() {
                    w.push(1.0);
                }
                Some(w)
            }
            _ => None,
        }
    }

    /// Target-noise level used when building training data.
    pub fn default_noise(&self) -> f64 {
        if self.kind == BanditKind::PerturbedHelp {
            PERTURBED_NOISE
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_classes: usize,
    pub per_class: usize,
    /// Labelled contexts per class kept out of training.
    pub held_out_per_class: usize,
    pub n_novel: usize,
    /// Feature dimension.
    pub dim: usize,
    /// Dimension of the random subspace familiar clusters live in, the way
    /// natural images occupy a thin part of pixel space. Equal to `dim` for
    /// full-rank clusters.
    pub latent_dim: usize,
    /// Scale of the class means.
    pub class_separation: f64,
    /// Standard deviation of each cluster.
    pub cluster_spread: f64,
    /// Distance novel clusters are moved from their class means, along a
    /// random direction of the full feature space.
    pub novel_shift: f64,
    pub help_prob: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_classes: 10,
            per_class: 100,
            held_out_per_class: 0,
            n_novel: 200,
            dim: 32,
            latent_dim: 8,
            class_separation: 1.2,
            cluster_spread: 0.5,
            novel_shift: 5.0,
            help_prob: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub familiar: Vec<Context>,
    pub held_out: Vec<Context>,
    pub novel: Vec<Context>,
    /// Class means in feature coordinates.
    pub class_means: Vec<Vec<f64>>,
}

fn gaussian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Gaussian-cluster contexts; deterministic under `config.seed`.
pub fn make_dataset(config: &DatasetConfig) -> Result<Dataset> {
    if config.n_classes < 2 || config.per_class == 0 || config.dim == 0 {
        return Err(Error::config("need at least two classes, one context per class and one dimension"));
    }
    if config.latent_dim == 0 || config.latent_dim > config.dim {
        return Err(Error::config(format!("latent_dim must be in 1..={}", config.dim)));
    }
    if !(config.cluster_spread > 0.0) || !(config.class_separation > 0.0) || !(config.novel_shift >= 0.0) {
        return Err(Error::config("spreads must be positive and the novel shift nonnegative"));
    }
    if !(0.0..=1.0).contains(&config.help_prob) {
        return Err(Error::config("help_prob must be in [0, 1]"));
    }
    let (dim, latent) = (config.dim, config.latent_dim);
    let mut rng = stream_rng(config.seed, Stream::Data);
    // orthonormal columns spanning the cluster subspace
    let basis = if latent == dim {
        DMatrix::identity(dim, dim)
    } else {
        DMatrix::from_vec(dim, latent, gaussian(dim * latent, 1.0, &mut rng)).qr().q()
    };
    let embed = |z: Vec<f64>| -> Vec<f64> { (&basis * DVector::from_vec(z)).iter().copied().collect() };
    let means: Vec<Vec<f64>> =
        (0..config.n_classes).map(|_| embed(gaussian(latent, config.class_separation, &mut rng))).collect();
    let directions: Vec<Vec<f64>> = (0..config.n_classes)
        .map(|_| {
            let v = gaussian(dim, 1.0, &mut rng);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let sample = |center: &[f64], label: Option<usize>, rng: &mut ChaCha8Rng| {
        let noise = embed(gaussian(latent, config.cluster_spread, rng));
        Context {
            features: center.iter().zip(noise).map(|(c, e)| c + e).collect(),
            label,
            help_available: rng.gen_bool(config.help_prob),
        }
    };
    let labelled = |count: usize, rng: &mut ChaCha8Rng| {
        let mut out = Vec::with_capacity(count * config.n_classes);
        for (c, m) in means.iter().enumerate() {
            for _ in 0..count {
                out.push(sample(m, Some(c), rng));
            }
        }
        out
    };
    let familiar = labelled(config.per_class, &mut rng);
    let held_out = labelled(config.held_out_per_class, &mut rng);
    let novel = (0..config.n_novel)
        .map(|i| {
            let c = i % config.n_classes;
            let center: Vec<f64> =
                means[c].iter().zip(&directions[c]).map(|(m, d)| m + config.novel_shift * d).collect();
            sample(&center, None, &mut rng)
        })
        .collect();
    Ok(Dataset { familiar, held_out, novel, class_means: means })
}

/// Reads contexts from CSV with header `label,help,f0,...`. An empty label
/// marks a novel context.
pub fn read_contexts_csv(path: &Path) -> Result<Vec<Context>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "label" || &header[1] != "help" {
        return Err(Error::Parse { what: "context CSV", line: 1, msg: "header must be `label,help,f0,...`".into() });
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = |msg: String| Error::Parse { what: "context CSV", line: i + 2, msg };
        if record.len() != header.len() {
            return Err(bad(format!("{} fields, header has {}", record.len(), header.len())));
        }
        let label = match &record[0] {
            "" => None,
            l => Some(l.parse::<usize>().map_err(|e| bad(format!("label `{l}`: {e}")))?),
        };
        let help_available = match &record[1] {
            "1" | "true" => true,
            "0" | "false" | "" => false,
            h => return Err(bad(format!("help flag `{h}`"))),
        };
        let features = record
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>().map_err(|e| bad(format!("feature `{f}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(Context { features, label, help_available });
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { what: "context CSV", line: 0, msg: format!("{other:?}") },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Uniform initial and next-state distributions over all contexts.
    AllImages,
    /// A single context as a one-state MDP.
    SingleImage(usize),
}

/// The task over `contexts` as a `γ = 0` MDP, with its reward table when
/// every context involved is labelled.
pub fn to_bandit_mdp(
    spec: &BanditTaskSpec,
    contexts: &[Context],
    regime: Regime,
) -> Result<(TabularMdp, Option<RewardTable>)> {
    if contexts.is_empty() {
        return Err(Error::config("no contexts"));
    }
    let n_actions = spec.n_actions();
    let chosen: Vec<&Context> = match regime {
        Regime::AllImages => contexts.iter().collect(),
        Regime::SingleImage(i) => {
            vec![contexts.get(i).ok_or(Error::IndexOutOfRange { index: i, len: contexts.len() })?]
        }
    };
    let n = chosen.len();
    let mdp = if n == 1 {
        TabularMdp::new(1, n_actions, vec![1.0; n_actions], vec![1.0], 0.0)?
    } else {
        let u = 1.0 / n as f64;
        TabularMdp::new(n, n_actions, vec![u; n * n_actions * n], vec![u; n], 0.0)?
    };
    let reward = if chosen.iter().all(|c| c.label.is_some()) {
        let mut values = Vec::with_capacity(n * n_actions);
        for c in &chosen {
            values.extend(spec.reward_row(c.label.expect("checked"), c.help_available)?);
        }
        Some(RewardTable::with_tight_bound(n, n_actions, RewardLayout::StateAction, values)?)
    } else {
        None
    };
    Ok((mdp, reward))
}

/// True reward table of labelled contexts; novel contexts have none.
pub fn true_reward(spec: &BanditTaskSpec, contexts: &[Context]) -> Result<RewardTable> {
    to_bandit_mdp(spec, contexts, Regime::AllImages)?.1.ok_or(Error::NovelReward)
}

/// Labelled contexts as training examples: a `fraction` subset (at least one
/// example, chosen by `seed`) with every action's reward as the target, plus
/// Gaussian target noise of standard deviation `noise_std` added once.
pub fn training_examples(
    spec: &BanditTaskSpec,
    contexts: &[Context],
    fraction: f64,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<Example>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("training fraction {fraction} is not in (0, 1]")));
    }
    let mut order: Vec<usize> = (0..contexts.len()).collect();
    if fraction < 1.0 {
        order.shuffle(&mut stream_rng(seed, Stream::Data));
        order.truncate(((fraction * contexts.len() as f64).ceil() as usize).max(1));
        order.sort_unstable();
    }
    let mut out = Vec::with_capacity(order.len());
    for i in order {
        let c = &contexts[i];
        let label = c.label.ok_or(Error::NovelReward)?;
        out.push(Example::new(spec.features(c), spec.reward_row(label, c.help_available)?));
    }
    perturb_targets(&mut out, noise_std, seed)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CautionMetrics {
    /// Probability of the help action, for tasks that have one.
    pub help_frequency: Option<f64>,
    pub mean_action_index: f64,
    /// Probability of the correct class over labelled contexts.
    pub accuracy: Option<f64>,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub action_frequency: Vec<f64>,
    /// Action frequencies of labelled contexts, one row per class.
    pub per_class_action_frequency: Vec<Vec<f64>>,
}

/// Caution metrics of a policy over `contexts`, weighting contexts uniformly.
pub fn caution_metrics(policy: &StationaryPolicy, spec: &BanditTaskSpec, contexts: &[Context]) -> Result<CautionMetrics> {
    let n_actions = spec.n_actions();
    policy.check_shape(contexts.len(), n_actions)?;
    if contexts.is_empty() {
        return Err(Error::config("no contexts"));
    }
    let mut action_frequency = vec![0.0; n_actions];
    let mut class_freq = vec![vec![0.0; n_actions]; spec.n_classes];
    let mut class_count = vec![0usize; spec.n_classes];
    for (s, c) in contexts.iter().enumerate() {
        for (a, &p) in policy.row(s).iter().enumerate() {
            action_frequency[a] += p;
        }
        if let Some(label) = c.label {
            if label >= spec.n_classes {
                return Err(Error::IndexOutOfRange { index: label, len: spec.n_classes });
            }
            class_count[label] += 1;
            for (f, &p) in class_freq[label].iter_mut().zip(policy.row(s)) {
                *f += p;
            }
        }
    }
    action_frequency.iter_mut().for_each(|f| *f /= contexts.len() as f64);
    for (row, &count) in class_freq.iter_mut().zip(&class_count) {
        if count > 0 {
            row.iter_mut().for_each(|f| *f /= count as f64);
        }
    }
    let per_class_accuracy: Vec<Option<f64>> =
        (0..spec.n_classes).map(|c| (class_count[c] > 0).then(|| class_freq[c][c])).collect();
    let labelled: usize = class_count.iter().sum();
    let accuracy = (labelled > 0).then(|| {
        (0..spec.n_classes).map(|c| class_freq[c][c] * class_count[c] as f64).sum::<f64>() / labelled as f64
    });
    Ok(CautionMetrics {
        help_frequency: spec.help_action().map(|h| action_frequency[h]),
        mean_action_index: action_frequency.iter().enumerate().map(|(a, f)| a as f64 * f).sum(),
        accuracy,
        per_class_accuracy,
        action_frequency,
        per_class_action_frequency: class_freq,
    })
}

/// Runs k-of-N CFR separately on each context's one-state MDP and stacks
/// the resulting policy rows. Context `i` sees `belief` restricted to that
/// context, shuffled by `config.seed`, or drawn with replacement under a seed
/// derived from `config.seed` and `i`.
pub fn single_image_kofn(
    spec: &BanditTaskSpec,
    contexts: &[Context],
    belief: &RewardEnsemble,
    config: &KofnConfig,
    replacement: bool,
) -> Result<StationaryPolicy> {
    if belief.n_states() != contexts.len() {
        return Err(Error::shape(format!("belief covers {} states, {} contexts", belief.n_states(), contexts.len())));
    }
    let mut rows = Vec::with_capacity(contexts.len());
    for i in 0..contexts.len() {
        let (mdp, _) = to_bandit_mdp(spec, contexts, Regime::SingleImage(i))?;
        let mut local = belief.restrict(&[i])?;
        if replacement {
            local = local.with_replacement(derive_seed(config.seed, i as u64));
        } else {
            local.shuffle(config.seed);
        }
        rows.push(run(&mdp, &mut local, config)?.0);
    }
    StationaryPolicy::stack(&rows)
}
