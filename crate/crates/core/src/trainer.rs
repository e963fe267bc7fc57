//! Small rectifier networks as reward models, trained on weighted squared
//! error and tabulated over an MDP's states to form ensemble members.
//!
//! Architecture: `input -> hidden (ReLU) -> output`. Parameters live in one
//! flat vector laid out as `[W1 (hidden x in), b1, W2 (out x hidden), b2]`,
//! weights row-major. Initialization is uniform in `±1/sqrt(fan_in)` for
//! weights and biases alike.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::belief::RewardEnsemble;
use crate::error::{Error, Result};
use crate::mdp::format::{push_row, read_text, write_atomic, Lines};
use crate::mdp::{RewardLayout, RewardTable, TabularMdp};
use crate::rng::{indexed_rng, stream_rng, Stream};

pub const CHECKPOINT_HEADER: &str = "CAUTIOUS-MLP v1";

#[derive(Debug, Clone, PartialEq)]
pub struct MlpRewardModel {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
    params: Vec<f64>,
}

impl MlpRewardModel {
    pub fn param_count(n_in: usize, n_hidden: usize, n_out: usize) -> usize {
        n_hidden * n_in + n_hidden + n_out * n_hidden + n_out
    }

    /// Fan-in uniform initialization.
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let mut params = Vec::with_capacity(Self::param_count(n_in, n_hidden, n_out));
        let a = 1.0 / (n_in as f64).sqrt();
        params.extend((0..n_hidden * n_in + n_hidden).map(|_| rng.gen_range(-a..a)));
        let b = 1.0 / (n_hidden as f64).sqrt();
        params.extend((0..n_out * n_hidden + n_out).map(|_| rng.gen_range(-b..b)));
        MlpRewardModel { n_in, n_hidden, n_out, params }
    }

    pub fn from_params(n_in: usize, n_hidden: usize, n_out: usize, params: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(Error::shape("network layers must be nonempty"));
        }
        if params.len() != Self::param_count(n_in, n_hidden, n_out) {
            return Err(Error::shape(format!(
                "{} parameters given, a {n_in}-{n_hidden}-{n_out} network has {}",
                params.len(),
                Self::param_count(n_in, n_hidden, n_out)
            )));
        }
        Ok(MlpRewardModel { n_in, n_hidden, n_out, params })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let (w1, rest) = self.params.split_at(self.n_hidden * self.n_in);
        let (b1, rest) = rest.split_at(self.n_hidden);
        let (w2, b2) = rest.split_at(self.n_out * self.n_hidden);
        (w1, b1, w2, b2)
    }

    fn forward_into(&self, x: &[f64], pre: &mut [f64], out: &mut [f64]) {
        let (w1, b1, w2, b2) = self.split();
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &w1[j * self.n_in..(j + 1) * self.n_in];
            *p = b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        for (o, y) in out.iter_mut().enumerate() {
            let row = &w2[o * self.n_hidden..(o + 1) * self.n_hidden];
            *y = b2[o] + row.iter().zip(pre.iter()).map(|(w, h)| w * h.max(0.0)).sum::<f64>();
        }
    }

    /// Predicted rewards for one feature vector.
    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.n_in {
            return Err(Error::shape(format!(
                "model expects {} features, got {}",
                self.n_in,
                features.len()
            )));
        }
        let mut pre = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_out];
        self.forward_into(features, &mut pre, &mut out);
        Ok(out)
    }

    /// Adds `scale * ∂loss/∂θ` for one example into `grad` and returns the
    /// example's loss `Σ_o w_o (y_o - t_o)² / n_out`.
    fn accumulate_grad(&self, ex: &Example, scale: f64, scratch: &mut Scratch, grad: &mut [f64]) -> f64 {
        let (n_in, n_hidden, n_out) = (self.n_in, self.n_hidden, self.n_out);
        self.forward_into(&ex.features, &mut scratch.pre, &mut scratch.out);
        let (_, _, w2, _) = self.split();
        let mut loss = 0.0;
        for o in 0..n_out {
            let err = scratch.out[o] - ex.target[o];
            loss += ex.weights[o] * err * err;
            scratch.dout[o] = 2.0 * ex.weights[o] * err / n_out as f64;
        }
        loss /= n_out as f64;

        let (g_w1, rest) = grad.split_at_mut(n_hidden * n_in);
        let (g_b1, rest) = rest.split_at_mut(n_hidden);
        let (g_w2, g_b2) = rest.split_at_mut(n_out * n_hidden);
        scratch.dpre.fill(0.0);
        for o in 0..n_out {
            let d = scratch.dout[o] * scale;
            if d == 0.0 {
                continue;
            }
            g_b2[o] += d;
            let row = &mut g_w2[o * n_hidden..(o + 1) * n_hidden];
            let w_row = &w2[o * n_hidden..(o + 1) * n_hidden];
            for j in 0..n_hidden {
                let h = scratch.pre[j];
                if h > 0.0 {
                    row[j] += d * h;
                    scratch.dpre[j] += d * w_row[j];
                }
            }
        }
        for j in 0..n_hidden {
            let d = scratch.dpre[j];
            if d == 0.0 {
                continue;
            }
            g_b1[j] += d;
            for (g, xi) in g_w1[j * n_in..(j + 1) * n_in].iter_mut().zip(&ex.features) {
                *g += d * xi;
            }
        }
        loss
    }

    /// Loss and its gradient for a single example.
    pub fn loss_and_grad(&self, ex: &Example) -> Result<(f64, Vec<f64>)> {
        self.check_example(ex)?;
        let mut grad = vec![0.0; self.params.len()];
        let mut scratch = Scratch::new(self);
        let loss = self.accumulate_grad(ex, 1.0, &mut scratch, &mut grad);
        Ok((loss, grad))
    }

    pub fn loss(&self, ex: &Example) -> Result<f64> {
        let y = self.forward(&ex.features)?;
        if ex.target.len() != self.n_out || ex.weights.len() != self.n_out {
            return Err(Error::shape("target or weight length differs from model outputs"));
        }
        Ok(y.iter()
            .zip(&ex.target)
            .zip(&ex.weights)
            .map(|((y, t), w)| w * (y - t) * (y - t))
            .sum::<f64>()
            / self.n_out as f64)
    }

    /// Mean example loss over a dataset.
    pub fn dataset_loss(&self, data: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            total += self.loss(ex)?;
        }
        Ok(total / data.len().max(1) as f64)
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.features.len() != self.n_in || ex.target.len() != self.n_out || ex.weights.len() != self.n_out {
            return Err(Error::shape(format!(
                "example is {}->{} (weights {}), model is {}->{}",
                ex.features.len(),
                ex.target.len(),
                ex.weights.len(),
                self.n_in,
                self.n_out
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from(CHECKPOINT_HEADER);
        out.push('\n');
        let _ = writeln!(out, "{} {} {}", self.n_in, self.n_hidden, self.n_out);
        let (w1, b1, w2, b2) = self.split();
        w1.chunks(self.n_in).for_each(|r| push_row(&mut out, r));
        push_row(&mut out, b1);
        w2.chunks(self.n_hidden).for_each(|r| push_row(&mut out, r));
        push_row(&mut out, b2);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = Lines::new("model checkpoint", text);
        lines.expect_header(CHECKPOINT_HEADER)?;
        let d = lines.usizes(3)?;
        let (n_in, n_hidden, n_out) = (d[0], d[1], d[2]);
        let mut params = lines.float_rows(n_hidden, n_in)?;
        params.extend(lines.floats(n_hidden)?);
        params.extend(lines.float_rows(n_out, n_hidden)?);
        params.extend(lines.floats(n_out)?);
        lines.finish()?;
        Self::from_params(n_in, n_hidden, n_out, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_checkpoint())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&read_text(path)?)
    }
}

struct Scratch {
    pre: Vec<f64>,
    out: Vec<f64>,
    dout: Vec<f64>,
    dpre: Vec<f64>,
}

impl Scratch {
    fn new(m: &MlpRewardModel) -> Self {
        Scratch {
            pre: vec![0.0; m.n_hidden],
            out: vec![0.0; m.n_out],
            dout: vec![0.0; m.n_out],
            dpre: vec![0.0; m.n_hidden],
        }
    }
}

/// One training example: features, per-output targets and loss weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Example {
    /// Example with unit loss weights.
    pub fn new(features: Vec<f64>, target: Vec<f64>) -> Self {
        let weights = vec![1.0; target.len()];
        Example { features, target, weights }
    }
}

/// Adds `N(0, std²)` noise to every target once.
pub fn perturb_targets(data: &mut [Example], std: f64, seed: u64) -> Result<()> {
    if std == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
    let mut rng = stream_rng(seed, Stream::Noise);
    for ex in data {
        for t in &mut ex.target {
            *t += normal.sample(&mut rng);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain mini-batch gradient descent.
    Sgd,
    /// Adaptive moment estimation with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Multiplies every example's per-output loss weights.
    pub output_weights: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 32,
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.0016,
            weight_decay: 0.0,
            optimizer: Optimizer::adam(),
            seed: 0,
            output_weights: None,
        }
    }
}

impl TrainConfig {
    /// Schedule for the gridworld reward regressor: full-batch Adam at a
    /// small learning rate with light weight decay.
    pub fn gridworld() -> Self {
        TrainConfig { epochs: 3000, batch_size: 800, learning_rate: 1e-4, weight_decay: 1e-5, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::config("epochs, batch size and hidden width must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight decay must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpRewardModel,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn check_dataset(data: &[Example]) -> Result<(usize, usize)> {
    let first = data.first().ok_or_else(|| Error::config("empty training dataset"))?;
    let (n_in, n_out) = (first.features.len(), first.target.len());
    for (i, ex) in data.iter().enumerate() {
        if ex.features.len() != n_in || ex.target.len() != n_out || ex.weights.len() != n_out {
            return Err(Error::shape(format!("example {i} has inconsistent dimensions")));
        }
    }
    Ok((n_in, n_out))
}

/// Trains a fresh network with `config.seed` on `data`.
pub fn train(data: &[Example], config: &TrainConfig) -> Result<Trained> {
    config.validate()?;
    let (n_in, n_out) = check_dataset(data)?;
    let mut rng = stream_rng(config.seed, Stream::Init);
    let model = MlpRewardModel::init(n_in, config.hidden, n_out, &mut rng);
    train_from(model, data, config, &mut rng)
}

fn train_from(
    mut model: MlpRewardModel,
    data: &[Example],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trained> {
    let owned;
    let data: &[Example] = match &config.output_weights {
        None => data,
        Some(w) => {
            if w.len() != model.n_out {
                return Err(Error::shape("output weight count differs from model outputs"));
            }
            owned = data
                .iter()
                .map(|ex| Example {
                    weights: ex.weights.iter().zip(w).map(|(a, b)| a * b).collect(),
                    ..ex.clone()
                })
                .collect::<Vec<_>>();
            &owned
        }
    };
    let n_params = model.params.len();
    let mut grad = vec![0.0; n_params];
    let mut m1 = vec![0.0; n_params];
    let mut m2 = vec![0.0; n_params];
    let mut scratch = Scratch::new(&model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            step += 1;
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                batch_loss += model.accumulate_grad(&data[i], scale, &mut scratch, &mut grad);
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            if config.weight_decay > 0.0 {
                for (g, p) in grad.iter_mut().zip(&model.params) {
                    *g += config.weight_decay * p;
                }
            }
            match config.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in model.params.iter_mut().zip(&grad) {
                        *p -= config.learning_rate * g;
                    }
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(step as i32);
                    let c2 = 1.0 - beta2.powi(step as i32);
                    for i in 0..n_params {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let m_hat = m1[i] / c1;
                        let v_hat = m2[i] / c2;
                        model.params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            if !model.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
        }
        epoch_losses.push(epoch_loss / data.len() as f64);
    }
    Ok(Trained { model, epoch_losses })
}

/// Largest relative difference between the analytic gradient and central
/// finite differences with step `eps`, over all parameters. Entries where
/// both gradients are below `1e-10` in magnitude count as exact.
pub fn grad_check(model: &MlpRewardModel, example: &Example, eps: f64) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(example)?;
    let mut probe = model.clone();
    let mut worst = 0.0_f64;
    for i in 0..model.params.len() {
        let orig = probe.params[i];
        probe.params[i] = orig + eps;
        let plus = probe.loss(example)?;
        probe.params[i] = orig - eps;
        let minus = probe.loss(example)?;
        probe.params[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let scale = analytic[i].abs().max(numeric.abs());
        if scale > 1e-10 {
            worst = worst.max((analytic[i] - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// How model predictions map onto reward-table entries.
#[derive(Debug, Clone, Copy)]
pub enum FeatureMap<'a> {
    /// One feature vector per state; the model outputs one reward per action
    /// and the table ignores the next state.
    PerState(&'a [Vec<f64>]),
    /// One feature vector per state; the model reads the concatenated
    /// features of `(s, s')` and outputs a single reward, so the table ignores
    /// the action. Pairs with no transition between them are left at zero.
    PerTransition(&'a [Vec<f64>]),
    /// Each `(s, a)`, at index `s * n_actions + a` of `outcomes`, lists
    /// `(feature index, probability)` pairs over its possible transitions.
    /// The model outputs a single reward per transition and the table holds
    /// the expected prediction of each `(s, a)`.
    PerOutcome { features: &'a [Vec<f64>], outcomes: &'a [Vec<(usize, f64)>] },
}

/// Fills a reward table for `mdp` from the model's predictions.
pub fn tabularize(model: &MlpRewardModel, map: FeatureMap<'_>, mdp: &TabularMdp) -> Result<RewardTable> {
    let (n_states, n_actions) = (mdp.n_states(), mdp.n_actions());
    match map {
        FeatureMap::PerState(feats) => {
            if feats.len() < n_states {
                return Err(Error::FeatureGap(feats.len()));
            }
            if model.n_out != n_actions {
                return Err(Error::shape(format!(
                    "per-state model has {} outputs for {n_actions} actions",
                    model.n_out
                )));
            }
            let mut values = Vec::with_capacity(n_states * n_actions);
            for f in &feats[..n_states] {
                values.extend(model.forward(f)?);
            }
            RewardTable::with_tight_bound(n_states, n_actions, RewardLayout::StateAction, values)
        }
        FeatureMap::PerTransition(feats) => {
            if feats.len() < n_states {
                return Err(Error::FeatureGap(feats.len()));
            }
            if model.n_out != 1 {
                return Err(Error::shape("per-transition model must have a single output"));
            }
            let mut values = vec![0.0; n_states * n_states];
            let mut reachable = vec![false; n_states];
            let mut input = Vec::with_capacity(model.n_in);
            let mut pre = vec![0.0; model.n_hidden];
            let mut out = [0.0];
            for s in 0..n_states {
                reachable.fill(false);
                for a in 0..n_actions {
                    for &(next, _) in mdp.successors(s, a) {
                        reachable[next] = true;
                    }
                }
                for next in (0..n_states).filter(|&n| reachable[n]) {
                    input.clear();
                    input.extend_from_slice(&feats[s]);
                    input.extend_from_slice(&feats[next]);
                    if input.len() != model.n_in {
                        return Err(Error::shape(format!(
                            "transition features have length {}, model expects {}",
                            input.len(),
                            model.n_in
                        )));
                    }
                    model.forward_into(&input, &mut pre, &mut out);
                    values[s * n_states + next] = out[0];
                }
            }
            RewardTable::with_tight_bound(n_states, n_actions, RewardLayout::StatePair, values)
        }
        FeatureMap::PerOutcome { features, outcomes } => {
            if model.n_out != 1 {
                return Err(Error::shape("per-outcome model must have a single output"));
            }
            if outcomes.len() < n_states * n_actions {
                return Err(Error::FeatureGap(outcomes.len() / n_actions));
            }
            let predictions = features.iter().map(|f| model.forward(f).map(|y| y[0])).collect::<Result<Vec<f64>>>()?;
            let mut values = Vec::with_capacity(n_states * n_actions);
            for branches in &outcomes[..n_states * n_actions] {
                let mut v = 0.0;
                for &(i, p) in branches {
                    let y = predictions.get(i).ok_or(Error::IndexOutOfRange { index: i, len: predictions.len() })?;
                    v += p * y;
                }
                values.push(v);
            }
            RewardTable::with_tight_bound(n_states, n_actions, RewardLayout::StateAction, values)
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleTraining {
    /// Members in seed order.
    pub ensemble: RewardEnsemble,
    pub models: Vec<MlpRewardModel>,
    pub epoch_losses: Vec<Vec<f64>>,
}

/// Trains `members` networks with seeds `base_seed + m`, each on its own
/// shuffle of the data, and tabulates each over `mdp`.
pub fn ensemble_train(
    data: &[Example],
    members: usize,
    base_seed: u64,
    config: &TrainConfig,
    map: FeatureMap<'_>,
    mdp: &TabularMdp,
) -> Result<EnsembleTraining> {
    if members == 0 {
        return Err(Error::config("an ensemble needs at least one member"));
    }
    config.validate()?;
    let (n_in, n_out) = check_dataset(data)?;
    let mut tables = Vec::with_capacity(members);
    let mut models = Vec::with_capacity(members);
    let mut epoch_losses = Vec::with_capacity(members);
    let mut shuffled = data.to_vec();
    for m in 0..members {
        let seed = base_seed.wrapping_add(m as u64);
        shuffled.clone_from_slice(data);
        shuffled.shuffle(&mut indexed_rng(seed, Stream::Data, 0));
        let mut rng = stream_rng(seed, Stream::Init);
        let init = MlpRewardModel::init(n_in, config.hidden, n_out, &mut rng);
        let trained = train_from(init, &shuffled, config, &mut rng)?;
        tables.push(tabularize(&trained.model, map, mdp)?);
        models.push(trained.model);
        epoch_losses.push(trained.epoch_losses);
    }
    Ok(EnsembleTraining { ensemble: RewardEnsemble::new(tables)?, models, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_example(rng: &mut impl Rng, n_in: usize, n_out: usize) -> Example {
        Example {
            features: (0..n_in).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            target: (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            weights: (0..n_out).map(|_| rng.gen_range(0.1..1.0)).collect(),
        }
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut params = vec![0.0; MlpRewardModel::param_count(3, 4, 2)];
        let n = params.len();
        params[n - 2] = 0.3;
        params[n - 1] = -1.5;
        let m = MlpRewardModel::from_params(3, 4, 2, params).unwrap();
        assert_eq!(m.forward(&[1.0, -2.0, 5.0]).unwrap(), vec![0.3, -1.5]);
    }

    #[test]
    fn hand_built_forward_pass() {
        // h = relu(2x - 1), y = 3h + 0.5
        let m = MlpRewardModel::from_params(1, 1, 1, vec![2.0, -1.0, 3.0, 0.5]).unwrap();
        assert_eq!(m.forward(&[2.0]).unwrap(), vec![9.5]);
        assert_eq!(m.forward(&[0.0]).unwrap(), vec![0.5]);
        assert_eq!(m.forward(&[2.0]).unwrap(), m.forward(&[2.0]).unwrap());
        assert!(m.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_targets_are_fit() {
        let mut rng = stream_rng(1, Stream::Data);
        let data: Vec<Example> = (0..64)
            .map(|_| Example::new((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect(), vec![0.25]))
            .collect();
        let cfg = TrainConfig { epochs: 300, batch_size: 16, learning_rate: 0.01, ..TrainConfig::default() };
        let trained = train(&data, &cfg).unwrap();
        assert!(trained.model.dataset_loss(&data).unwrap() < 1e-4);
    }

    #[test]
    fn single_example_is_overfit() {
        let data = vec![Example::new(vec![0.3, -0.7], vec![1.2, -0.4])];
        let cfg = TrainConfig { epochs: 2000, batch_size: 1, learning_rate: 0.01, ..TrainConfig::default() };
        let m = train(&data, &cfg).unwrap().model;
        let y = m.forward(&data[0].features).unwrap();
        assert!((y[0] - 1.2).abs() < 1e-3 && (y[1] + 0.4).abs() < 1e-3, "{y:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = vec![Example::new(vec![1.0, 0.0], vec![1.0]), Example::new(vec![0.0, 1.0], vec![0.0])];
        let cfg = TrainConfig { epochs: 5, seed: 9, ..TrainConfig::default() };
        assert_eq!(train(&data, &cfg).unwrap().model, train(&data, &cfg).unwrap().model);
    }

    #[test]
    fn non_finite_loss_names_the_step() {
        let data = vec![Example::new(vec![1e200], vec![1e200])];
        let cfg = TrainConfig { epochs: 3, batch_size: 1, optimizer: Optimizer::Sgd, learning_rate: 1.0, ..TrainConfig::default() };
        assert!(matches!(train(&data, &cfg), Err(Error::NonFiniteLoss { step: 1 })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = vec![Example::new(vec![1.0], vec![1.0])];
        for cfg in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: 0.0, ..TrainConfig::default() },
        ] {
            assert!(train(&data, &cfg).is_err());
        }
        assert!(train(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradient_of_linear_regime_is_exact() {
        // all hidden pre-activations positive
        let mut rng = stream_rng(3, Stream::Init);
        let n = MlpRewardModel::param_count(3, 4, 2);
        let mut params: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..0.5)).collect();
        params[12..16].iter_mut().for_each(|b| *b = 1.0);
        let m = MlpRewardModel::from_params(3, 4, 2, params).unwrap();
        let ex = Example::new(vec![0.5, 0.2, 0.1], vec![0.3, -0.2]);
        assert!(grad_check(&m, &ex, 1e-5).unwrap() < 1e-7);
    }

    #[test]
    fn random_gradients_match_finite_differences() {
        let mut rng = stream_rng(4, Stream::Init);
        for _ in 0..20 {
            let m = MlpRewardModel::init(5, 8, 3, &mut rng);
            let ex = random_example(&mut rng, 5, 3);
            assert!(grad_check(&m, &ex, 1e-5).unwrap() < 1e-4);
        }
    }

    #[test]
    fn coarse_step_degrades_the_check() {
        let mut rng = stream_rng(5, Stream::Init);
        let m = MlpRewardModel::init(3, 6, 2, &mut rng);
        let ex = random_example(&mut rng, 3, 2);
        assert!(grad_check(&m, &ex, 1e-1).unwrap() > grad_check(&m, &ex, 1e-5).unwrap());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = MlpRewardModel::init(3, 5, 2, &mut stream_rng(6, Stream::Init));
        assert_eq!(MlpRewardModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }

    fn bandit_mdp(n_states: usize, n_actions: usize) -> TabularMdp {
        let mut t = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                t[(s * n_actions + a) * n_states + s] = 1.0;
            }
        }
        TabularMdp::new(n_states, n_actions, t, vec![1.0 / n_states as f64; n_states], 0.0).unwrap()
    }

    #[test]
    fn tabularize_modes() {
        let mdp = bandit_mdp(3, 2);
        let feats = vec![vec![1.0], vec![2.0], vec![3.0]];
        let mut params = vec![0.0; MlpRewardModel::param_count(1, 2, 2)];
        let n = params.len();
        params[n - 2] = 0.7;
        params[n - 1] = 0.7;
        let constant = MlpRewardModel::from_params(1, 2, 2, params).unwrap();
        let t = tabularize(&constant, FeatureMap::PerState(&feats), &mdp).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.7));

        let m = MlpRewardModel::init(1, 4, 2, &mut stream_rng(1, Stream::Init));
        let t = tabularize(&m, FeatureMap::PerState(&feats), &mdp).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                assert!((0..3).all(|n| t.get(s, a, n) == t.get(s, a, 0)));
            }
        }
        let pair = MlpRewardModel::init(2, 4, 1, &mut stream_rng(2, Stream::Init));
        let t = tabularize(&pair, FeatureMap::PerTransition(&feats), &mdp).unwrap();
        for s in 0..3 {
            for n in 0..3 {
                assert!((0..2).all(|a| t.get(s, a, n) == t.get(s, 0, n)));
            }
        }
        // expectation over outcome features
        let frames = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let outcomes: Vec<Vec<(usize, f64)>> = (0..6).map(|i| vec![(0, 0.25 * (i % 3) as f64), (1, 1.0 - 0.25 * (i % 3) as f64)]).collect();
        let t = tabularize(&pair, FeatureMap::PerOutcome { features: &frames, outcomes: &outcomes }, &mdp).unwrap();
        let (y0, y1) = (pair.forward(&frames[0]).unwrap()[0], pair.forward(&frames[1]).unwrap()[0]);
        for i in 0..6 {
            let w = 0.25 * (i % 3) as f64;
            assert!((t.get(i / 2, i % 2, 0) - (w * y0 + (1.0 - w) * y1)).abs() < 1e-15);
        }
        assert!(tabularize(&pair, FeatureMap::PerOutcome { features: &frames, outcomes: &outcomes[..4] }, &mdp).is_err());
        assert!(matches!(
            tabularize(&m, FeatureMap::PerState(&feats[..2]), &mdp),
            Err(Error::FeatureGap(2))
        ));
    }

    #[test]
    fn ensemble_training_is_reproducible() {
        let mdp = bandit_mdp(2, 2);
        let feats = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let data: Vec<Example> = feats.iter().map(|f| Example::new(f.clone(), vec![f[0], 0.25])).collect();
        let cfg = TrainConfig { epochs: 10, hidden: 4, ..TrainConfig::default() };
        let a = ensemble_train(&data, 3, 5, &cfg, FeatureMap::PerState(&feats), &mdp).unwrap();
        let b = ensemble_train(&data, 3, 5, &cfg, FeatureMap::PerState(&feats), &mdp).unwrap();
        assert_eq!(a.models, b.models);

        let single = ensemble_train(&data, 1, 5, &cfg, FeatureMap::PerState(&feats), &mdp).unwrap();
        assert_eq!(single.models[0], a.models[0]);
        assert_eq!(single.ensemble.member(0).values(), a.ensemble.member(0).values());
        assert!(ensemble_train(&data, 0, 5, &cfg, FeatureMap::PerState(&feats), &mdp).is_err());
    }
}
