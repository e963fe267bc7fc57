//! A continuing driving gridworld.
//!
//! The road is four columns wide, `[ditch, road, road, ditch]`. The car sits
//! on the bottom row and sees `vision_rows` rows ahead; the world shifts down
//! by the distance the car travels. Each half of the road (columns `{0, 1}`
//! and `{2, 3}`) holds at most one obstacle. Row `0` is the row directly in
//! front of the car.
//!
//! Per step the car earns `+1` per space travelled, `-2` per space travelled
//! in a ditch, and `-2 · speed` per obstacle it drives over.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::Rng;

use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, expected_return, EvalMethod};
use crate::mdp::{RewardLayout, RewardTable, StationaryPolicy, TabularMdp};
use crate::rng::{stream_rng, Stream};
use crate::trainer::Example;

pub const N_COLUMNS: usize = 4;
pub const DITCH_COLUMNS: [usize; 2] = [0, 3];
pub const N_ACTIONS: usize = 5;
/// Feature channels: pavement, ditch, car, obstacle.
pub const N_CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Left = 0,
    Right = 1,
    Accelerate = 2,
    Brake = 3,
    Cruise = 4,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Left, Action::Right, Action::Accelerate, Action::Brake, Action::Cruise];

    pub fn from_index(a: usize) -> Result<Action> {
        Action::ALL.get(a).copied().ok_or(Error::IndexOutOfRange { index: a, len: N_ACTIONS })
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Left => "left",
            Action::Right => "right",
            Action::Accelerate => "accelerate",
            Action::Brake => "brake",
            Action::Cruise => "cruise",
        }
    }
}

pub fn is_ditch(column: usize) -> bool {
    DITCH_COLUMNS.contains(&column)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub vision_rows: usize,
    /// Chance that a vacant half gains an obstacle in each newly revealed row.
    pub spawn_prob: f64,
    /// Columns obstacles may occupy, sorted.
    pub obstacle_columns: Vec<usize>,
    pub discount: f64,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::familiar()
    }
}

impl GridConfig {
    /// Obstacles only in the ditches.
    pub fn familiar() -> Self {
        GridConfig { vision_rows: 2, spawn_prob: 0.5, obstacle_columns: vec![0, 3], discount: 0.99, seed: 0 }
    }

    /// Obstacles anywhere, including on the road.
    pub fn novel() -> Self {
        GridConfig { obstacle_columns: vec![0, 1, 2, 3], ..GridConfig::familiar() }
    }

    pub fn speed_limit(&self) -> usize {
        self.vision_rows + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.vision_rows == 0 {
            return Err(Error::config("vision_rows must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return Err(Error::config(format!("spawn_prob {} is not in [0, 1]", self.spawn_prob)));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config(format!("discount {} is not in [0, 1)", self.discount)));
        }
        if self.obstacle_columns.iter().any(|&c| c >= N_COLUMNS) {
            return Err(Error::config("obstacle columns must be in 0..4"));
        }
        if self.obstacle_columns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("obstacle columns must be sorted and distinct"));
        }
        Ok(())
    }

    /// Allowed obstacle columns in the left (`0`) or right (`1`) half.
    pub fn half_columns(&self, half: usize) -> Vec<usize> {
        self.obstacle_columns.iter().copied().filter(|&c| c / 2 == half).collect()
    }

    /// Reads `vision_rows`, `spawn_prob`, `obstacle_columns` (a list or
    /// `familiar` / `novel`), `discount` and `seed`, leaving other keys.
    pub fn take_from(kv: &mut KeyValues) -> Result<Self> {
        let mut cfg = GridConfig::familiar();
        cfg.vision_rows = kv.take_or("vision_rows", cfg.vision_rows)?;
        cfg.spawn_prob = kv.take_or("spawn_prob", cfg.spawn_prob)?;
        cfg.discount = kv.take_or("discount", cfg.discount)?;
        cfg.seed = kv.take_or("seed", cfg.seed)?;
        match kv.take_str("obstacle_columns").as_deref() {
            None | Some("familiar") => {}
            Some("novel") => cfg.obstacle_columns = GridConfig::novel().obstacle_columns,
            Some(list) => {
                let mut cols = list
                    .split(',')
                    .map(|c| c.trim().parse::<usize>().map_err(|e| Error::config(format!("obstacle column `{c}`: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                cols.sort_unstable();
                cols.dedup();
                cfg.obstacle_columns = cols;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KeyValues::parse("gridworld config", text)?;
        let cfg = GridConfig::take_from(&mut kv)?;
        kv.finish()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let cols: Vec<String> = self.obstacle_columns.iter().map(|c| c.to_string()).collect();
        format!(
            "vision_rows = {}\nspawn_prob = {:?}\nobstacle_columns = {}\ndiscount = {:?}\nseed = {}\n",
            self.vision_rows,
            self.spawn_prob,
            cols.join(","),
            self.discount,
            self.seed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Obstacle {
    pub row: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DrivingState {
    pub car_column: usize,
    pub speed: usize,
    pub left: Option<Obstacle>,
    pub right: Option<Obstacle>,
}

impl DrivingState {
    pub fn obstacles(&self) -> impl Iterator<Item = Obstacle> {
        self.left.into_iter().chain(self.right)
    }

    pub fn half(&self, half: usize) -> Option<Obstacle> {
        if half == 0 {
            self.left
        } else {
            self.right
        }
    }

    fn half_mut(&mut self, half: usize) -> &mut Option<Obstacle> {
        if half == 0 {
            &mut self.left
        } else {
            &mut self.right
        }
    }
}

/// Enumerated states in canonical order: car column, speed, left obstacle,
/// right obstacle, with "no obstacle" before any obstacle and obstacles
/// ordered by (row, column).
pub fn enumerate_states(config: &GridConfig) -> Vec<DrivingState> {
    let options = |half: usize| {
        let cols = config.half_columns(half);
        let mut out = vec![None];
        for row in 0..config.vision_rows {
            out.extend(cols.iter().map(|&column| Some(Obstacle { row, column })));
        }
        out
    };
    let (left, right) = (options(0), options(1));
    let mut states = Vec::new();
    for car_column in 0..N_COLUMNS {
        for speed in 0..=config.speed_limit() {
            for &l in &left {
                for &r in &right {
                    states.push(DrivingState { car_column, speed, left: l, right: r });
                }
            }
        }
    }
    states
}

/// One branch of a transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub probability: f64,
    pub next: DrivingState,
    pub reward: f64,
    /// Spaces travelled this step.
    pub forward: usize,
    pub collisions: usize,
}

/// Exact successor distribution of `(state, action)`.
pub fn successors(config: &GridConfig, state: &DrivingState, action: Action) -> Vec<Outcome> {
    let limit = config.speed_limit();
    let speed = state.speed;
    let (column, forward) = match action {
        Action::Left | Action::Right if speed == 0 => (state.car_column, 0),
        Action::Left => (state.car_column.saturating_sub(1), speed - 1),
        Action::Right => ((state.car_column + 1).min(N_COLUMNS - 1), speed - 1),
        _ => (state.car_column, speed),
    };
    let new_speed = match action {
        Action::Accelerate => (speed + 1).min(limit),
        Action::Brake => speed.saturating_sub(1),
        _ => speed,
    };

    let mut base = DrivingState { car_column: column, speed: new_speed, left: None, right: None };
    let mut collisions = 0;
    for half in 0..2 {
        if let Some(o) = state.half(half) {
            if o.row < forward {
                // swept past (or driven over) and gone
                if o.column == column {
                    collisions += 1;
                }
            } else {
                *base.half_mut(half) = Some(Obstacle { row: o.row - forward, column: o.column });
            }
        }
    }
    let f = forward as f64;
    let reward = f - if is_ditch(column) { 2.0 * f } else { 0.0 } - 2.0 * speed as f64 * collisions as f64;

    // rows newly revealed at the far end, nearest first
    let v = config.vision_rows;
    let revealed = (v - forward.min(v))..v;
    let spawns = |half: usize| -> Vec<(f64, Option<Obstacle>)> {
        let cols = config.half_columns(half);
        if base.half(half).is_some() || cols.is_empty() || revealed.is_empty() {
            return vec![(1.0, base.half(half))];
        }
        let mut out = Vec::new();
        let mut vacant = 1.0;
        for row in revealed.clone() {
            let each = vacant * config.spawn_prob / cols.len() as f64;
            if each > 0.0 {
                out.extend(cols.iter().map(|&column| (each, Some(Obstacle { row, column }))));
            }
            vacant *= 1.0 - config.spawn_prob;
        }
        if vacant > 0.0 {
            out.push((vacant, None));
        }
        out
    };
    let (left, right) = (spawns(0), spawns(1));
    let mut out = Vec::with_capacity(left.len() * right.len());
    for &(pl, l) in &left {
        for &(pr, r) in &right {
            out.push(Outcome {
                probability: pl * pr,
                next: DrivingState { left: l, right: r, ..base },
                reward,
                forward,
                collisions,
            });
        }
    }
    out
}

/// Discounted safety statistics, each a normalized discounted expectation
/// from the initial distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyStats {
    pub discounted_speed: f64,
    pub discounted_collision_rate: f64,
    pub discounted_collision_speed: f64,
}

impl SafetyStats {
    pub fn as_array(&self) -> [f64; 3] {
        [self.discounted_speed, self.discounted_collision_rate, self.discounted_collision_speed]
    }

    pub const NAMES: [&'static str; 3] = ["discounted_speed", "discounted_collision_rate", "discounted_collision_speed"];
}

/// The enumerated gridworld as a tabular MDP with its true reward.
#[derive(Debug, Clone)]
pub struct DrivingGridworld {
    config: GridConfig,
    states: Vec<DrivingState>,
    index: HashMap<DrivingState, usize>,
    mdp: TabularMdp,
    reward: RewardTable,
    /// Per `(s, a)`: 1 if the step drives over an obstacle.
    collided: Vec<f64>,
}

impl DrivingGridworld {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        let states = enumerate_states(&config);
        let index: HashMap<DrivingState, usize> = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let n = states.len();
        let mut rows = Vec::with_capacity(n * N_ACTIONS);
        let mut reward = Vec::with_capacity(n * N_ACTIONS);
        let mut collided = Vec::with_capacity(n * N_ACTIONS);
        for s in &states {
            for action in Action::ALL {
                let outs = successors(&config, s, action);
                // reward and collisions do not depend on the spawn branch
                reward.push(outs[0].reward);
                collided.push(if outs[0].collisions > 0 { 1.0 } else { 0.0 });
                rows.push(outs.iter().map(|o| (index[&o.next], o.probability)).collect::<Vec<_>>());
            }
        }
        let initial = initial_distribution(&states);
        let mdp = TabularMdp::from_sparse(n, N_ACTIONS, &rows, initial, config.discount)?;
        let reward = RewardTable::with_tight_bound(n, N_ACTIONS, RewardLayout::StateAction, reward)?;
        Ok(DrivingGridworld { config, states, index, mdp, reward, collided })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[DrivingState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &DrivingState {
        &self.states[i]
    }

    pub fn index_of(&self, state: &DrivingState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }

    /// True reward, depending on `(s, a)` only.
    pub fn reward(&self) -> &RewardTable {
        &self.reward
    }

    /// Feature vectors of every state, in state order.
    pub fn features(&self) -> Vec<Vec<f64>> {
        self.states.iter().map(|s| encode_features(&self.config, s)).collect()
    }

    /// Pseudo-reward tables whose normalized values are the safety
    /// statistics: current speed, collision indicator, collision speed.
    pub fn stat_rewards(&self) -> Result<[RewardTable; 3]> {
        let n = self.n_states();
        let speed: Vec<f64> = (0..n * N_ACTIONS).map(|i| self.states[i / N_ACTIONS].speed as f64).collect();
        let collision_speed: Vec<f64> = speed.iter().zip(&self.collided).map(|(s, c)| s * c).collect();
        let table = |v: Vec<f64>| RewardTable::with_tight_bound(n, N_ACTIONS, RewardLayout::StateAction, v);
        Ok([table(speed)?, table(self.collided.clone())?, table(collision_speed)?])
    }

    /// Safety statistics by iterative evaluation to `tol`.
    pub fn safety_stats(&self, policy: &StationaryPolicy, tol: f64) -> Result<SafetyStats> {
        self.safety_stats_with(policy, EvalMethod::Iterative { tol, max_sweeps: crate::eval::DEFAULT_MAX_SWEEPS })
    }

    /// Safety statistics, solved only over the states `policy` can reach so
    /// that statistics which are zero along every reachable path come out as
    /// exactly zero.
    pub fn safety_stats_with(&self, policy: &StationaryPolicy, method: EvalMethod) -> Result<SafetyStats> {
        policy.check_shape(self.n_states(), N_ACTIONS)?;
        let reachable = self.reachable(policy);
        let (mdp, policy) = if reachable.len() == self.n_states() {
            (self.mdp.clone(), policy.clone())
        } else {
            self.restricted(&reachable, policy)?
        };
        let mut out = [0.0; 3];
        for (o, table) in out.iter_mut().zip(self.stat_rewards()?) {
            let table = if reachable.len() == self.n_states() { table } else { table.restrict(&reachable)? };
            let v = evaluate_with(&mdp, &policy, &table, method)?;
            *o = expected_return(&v, mdp.initial_dist());
        }
        Ok(SafetyStats { discounted_speed: out[0], discounted_collision_rate: out[1], discounted_collision_speed: out[2] })
    }

    /// States reachable from the initial distribution under `policy`, sorted.
    fn reachable(&self, policy: &StationaryPolicy) -> Vec<usize> {
        let mut seen = vec![false; self.n_states()];
        let mut stack: Vec<usize> = (0..self.n_states()).filter(|&s| self.mdp.initial_dist()[s] > 0.0).collect();
        stack.iter().for_each(|&s| seen[s] = true);
        while let Some(s) = stack.pop() {
            for a in 0..N_ACTIONS {
                if policy.prob(s, a) == 0.0 {
                    continue;
                }
                for &(next, _) in self.mdp.successors(s, a) {
                    if !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
        }
        (0..self.n_states()).filter(|&s| seen[s]).collect()
    }

    /// The MDP and policy over the closed set `states`. Actions the policy
    /// never takes become self-loops, which leaves every value unchanged.
    fn restricted(&self, states: &[usize], policy: &StationaryPolicy) -> Result<(TabularMdp, StationaryPolicy)> {
        let mut position = vec![usize::MAX; self.n_states()];
        for (i, &s) in states.iter().enumerate() {
            position[s] = i;
        }
        let mut rows = Vec::with_capacity(states.len() * N_ACTIONS);
        let mut probs = Vec::with_capacity(states.len() * N_ACTIONS);
        for (i, &s) in states.iter().enumerate() {
            for a in 0..N_ACTIONS {
                let p = policy.prob(s, a);
                probs.push(p);
                rows.push(if p == 0.0 {
                    vec![(i, 1.0)]
                } else {
                    self.mdp.successors(s, a).iter().map(|&(next, q)| (position[next], q)).collect()
                });
            }
        }
        let initial = states.iter().map(|&s| self.mdp.initial_dist()[s]).collect();
        let mdp = TabularMdp::from_sparse(states.len(), N_ACTIONS, &rows, initial, self.mdp.discount())?;
        Ok((mdp, StationaryPolicy::new(states.len(), N_ACTIONS, probs)?))
    }

    /// Distinct transition frames of this world together with, per
    /// `(s, a)` at index `s * N_ACTIONS + a`, the `(frame index, probability)`
    /// pairs of its successor branches. See [`encode_frame`].
    pub fn transition_frames(&self) -> (Vec<Vec<f64>>, Vec<Vec<(usize, f64)>>) {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut frames = Vec::new();
        let mut outcomes = Vec::with_capacity(self.n_states() * N_ACTIONS);
        for state in &self.states {
            for action in Action::ALL {
                let mut branches: Vec<(usize, f64)> = Vec::new();
                for o in successors(&self.config, state, action) {
                    let x = encode_frame(&self.config, state, &o);
                    let key = x.iter().map(|v| v.to_bits()).collect();
                    let i = *index.entry(key).or_insert_with(|| {
                        frames.push(x);
                        frames.len() - 1
                    });
                    match branches.iter_mut().find(|(j, _)| *j == i) {
                        Some(b) => b.1 += o.probability,
                        None => branches.push((i, o.probability)),
                    }
                }
                outcomes.push(branches);
            }
        }
        (frames, outcomes)
    }

    /// One training tuple `(frame, [r])` per distinct transition frame.
    pub fn transition_examples(&self) -> Vec<Example> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for state in &self.states {
            for action in Action::ALL {
                for o in successors(&self.config, state, action) {
                    let x = encode_frame(&self.config, state, &o);
                    if seen.insert(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>()) {
                        out.push(Example::new(x, vec![o.reward]));
                    }
                }
            }
        }
        out
    }

    /// Monte-Carlo estimate of the safety statistics that samples the
    /// dynamics directly. Each rollout stops after every step with
    /// probability `1 - γ` and reports the statistics of its last step, which
    /// makes the estimate unbiased for the normalized discounted values.
    pub fn monte_carlo_safety(&self, policy: &StationaryPolicy, rollouts: usize, seed: u64) -> Result<(SafetyStats, SafetyStats)> {
        policy.check_shape(self.n_states(), N_ACTIONS)?;
        let mut rng = stream_rng(seed, Stream::Rollout);
        let initial = self.mdp.initial_dist();
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for _ in 0..rollouts {
            let mut state = self.states[sample(initial, &mut rng)];
            let sample_stats = loop {
                let s = self.index[&state];
                let action = Action::ALL[sample(policy.row(s), &mut rng)];
                let outs = successors(&self.config, &state, action);
                if rng.gen::<f64>() >= self.config.discount {
                    let hit = if outs[0].collisions > 0 { 1.0 } else { 0.0 };
                    let speed = state.speed as f64;
                    break [speed, hit, speed * hit];
                }
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = &outs[outs.len() - 1];
                for o in &outs {
                    acc += o.probability;
                    if u < acc {
                        chosen = o;
                        break;
                    }
                }
                state = chosen.next;
            };
            for i in 0..3 {
                sum[i] += sample_stats[i];
                sum_sq[i] += sample_stats[i] * sample_stats[i];
            }
        }
        let n = rollouts as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let se: Vec<f64> = (0..3)
            .map(|i| ((sum_sq[i] / n - mean[i] * mean[i]).max(0.0) * n / (n - 1.0).max(1.0) / n).sqrt())
            .collect();
        let mk = |v: &[f64]| SafetyStats { discounted_speed: v[0], discounted_collision_rate: v[1], discounted_collision_speed: v[2] };
        Ok((mk(&mean), mk(&se)))
    }

    /// Deterministic policy choosing `pick(state)` everywhere.
    pub fn policy_from_fn(&self, pick: impl Fn(&DrivingState) -> Action) -> StationaryPolicy {
        let actions: Vec<usize> = self.states.iter().map(|s| pick(s) as usize).collect();
        StationaryPolicy::deterministic(N_ACTIONS, &actions).expect("actions are in range")
    }
}

fn sample(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Uniform over obstacle-free states at speed 1 with the car on the road.
fn initial_distribution(states: &[DrivingState]) -> Vec<f64> {
    let start = |s: &DrivingState| s.speed == 1 && s.left.is_none() && s.right.is_none() && !is_ditch(s.car_column);
    let count = states.iter().filter(|s| start(s)).count() as f64;
    states.iter().map(|s| if start(s) { 1.0 / count } else { 0.0 }).collect()
}

/// Tabular MDP and true reward of the configured world.
pub fn to_tabular_mdp(config: &GridConfig) -> Result<(TabularMdp, RewardTable)> {
    let world = DrivingGridworld::new(config.clone())?;
    Ok((world.mdp, world.reward))
}

pub fn feature_len(config: &GridConfig) -> usize {
    N_CHANNELS * (config.vision_rows + 1) * N_COLUMNS + config.speed_limit() + 1
}

/// Four binary channels (pavement, ditch, car, obstacle) over the
/// `(vision_rows + 1) x 4` visible grid, grid row 0 being the car's row,
/// followed by a one-hot speed.
pub fn encode_features(config: &GridConfig, state: &DrivingState) -> Vec<f64> {
    let rows = config.vision_rows + 1;
    let plane = rows * N_COLUMNS;
    let mut x = vec![0.0; feature_len(config)];
    for r in 0..rows {
        for c in 0..N_COLUMNS {
            let ch = if is_ditch(c) { 1 } else { 0 };
            x[ch * plane + r * N_COLUMNS + c] = 1.0;
        }
    }
    x[2 * plane + state.car_column] = 1.0;
    for o in state.obstacles() {
        x[3 * plane + (o.row + 1) * N_COLUMNS + o.column] = 1.0;
    }
    x[N_CHANNELS * plane + state.speed] = 1.0;
    x
}

/// Horizontal offsets of a car-centred view: `-3..=3`.
const CENTRED_WIDTH: usize = 2 * N_COLUMNS - 1;

pub fn frame_len(config: &GridConfig) -> usize {
    let rows = config.vision_rows + 1;
    N_CHANNELS * rows * N_COLUMNS + 2 * rows * CENTRED_WIDTH + 2 * (config.speed_limit() + 1)
}

/// Features of one transition branch: the grid channels of the next state,
/// with any obstacle the car drove over drawn in the car's cell; car-centred
/// copies of the ditch and obstacle channels (offsets `-3..=3`, a cheap
/// stand-in for the translation sharing of a convolution); then a one-hot of
/// the speed at the start of the step and a one-hot of the distance
/// travelled. The branch reward is a function of these features.
pub fn encode_frame(config: &GridConfig, state: &DrivingState, outcome: &Outcome) -> Vec<f64> {
    let plane = (config.vision_rows + 1) * N_COLUMNS;
    let mut x = encode_features(config, &outcome.next);
    x.truncate(N_CHANNELS * plane);
    if outcome.collisions > 0 {
        x[3 * plane + outcome.next.car_column] = 1.0;
    }
    // car-centred copies of the ditch and obstacle channels
    let car = outcome.next.car_column;
    let centred = |grid: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; (config.vision_rows + 1) * CENTRED_WIDTH];
        for r in 0..=config.vision_rows {
            for c in 0..N_COLUMNS {
                out[r * CENTRED_WIDTH + c + N_COLUMNS - 1 - car] = grid[r * N_COLUMNS + c];
            }
        }
        out
    };
    let ditch = centred(&x[plane..2 * plane]);
    let obstacles = centred(&x[3 * plane..4 * plane]);
    x.extend(ditch);
    x.extend(obstacles);
    let one_hot = config.speed_limit() + 1;
    let base = x.len();
    x.resize(base + 2 * one_hot, 0.0);
    x[base + state.speed] = 1.0;
    x[base + one_hot + outcome.forward] = 1.0;
    x
}

/// ASCII picture of a state: farthest row on top, `d` ditch, `.` road, `X`
/// obstacle, `C` car, speed digit to the right of the car row.
pub fn render(config: &GridConfig, state: &DrivingState) -> String {
    let mut out = String::new();
    for r in (0..=config.vision_rows).rev() {
        for c in 0..N_COLUMNS {
            let obstacle = r > 0 && state.obstacles().any(|o| o.row + 1 == r && o.column == c);
            out.push(if obstacle {
                'X'
            } else if r == 0 && c == state.car_column {
                'C'
            } else if is_ditch(c) {
                'd'
            } else {
                '.'
            });
        }
        if r == 0 {
            out.push(' ');
            out.push_str(&state.speed.to_string());
        }
        out.push('\n');
    }
    out
}

impl fmt::Display for DrivingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ob = |o: Option<Obstacle>| o.map_or("-".to_string(), |o| format!("{}@{}", o.column, o.row));
        write!(f, "col {} speed {} left {} right {}", self.car_column, self.speed, ob(self.left), ob(self.right))
    }
}
