#![allow(dead_code)]

use cautious::mdp::{RewardLayout, RewardTable, StationaryPolicy, TabularMdp};
use rand::Rng;

pub const DISCOUNTS: [f64; 4] = [0.0, 0.5, 0.9, 0.99];

/// A random probability vector with roughly a third of its entries zeroed.
pub fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() + 1e-3 }).collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.gen_range(0..n)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

pub fn random_mdp(rng: &mut impl Rng, n_states: usize, n_actions: usize, discount: f64) -> TabularMdp {
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(random_distribution(rng, n_states));
    }
    let initial = random_distribution(rng, n_states);
    TabularMdp::new(n_states, n_actions, transition, initial, discount).unwrap()
}

/// Random small MDP: up to 6 states, up to 4 actions, discount from [`DISCOUNTS`].
pub fn small_mdp(rng: &mut impl Rng) -> TabularMdp {
    let n = rng.gen_range(1..=6);
    let a = rng.gen_range(1..=4);
    let g = DISCOUNTS[rng.gen_range(0..DISCOUNTS.len())];
    random_mdp(rng, n, a, g)
}

pub fn random_reward(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> RewardTable {
    let values = (0..n_states * n_actions * n_states).map(|_| rng.gen_range(-1.0..1.0)).collect();
    RewardTable::new(n_states, n_actions, RewardLayout::Full, values, 1.0).unwrap()
}

pub fn random_policy(rng: &mut impl Rng, n_states: usize, n_actions: usize) -> StationaryPolicy {
    let probs = (0..n_states).flat_map(|_| random_distribution(rng, n_actions)).collect();
    StationaryPolicy::new(n_states, n_actions, probs).unwrap()
}

/// Every deterministic policy of an `n_states x n_actions` MDP.
pub fn deterministic_policies(n_states: usize, n_actions: usize) -> Vec<StationaryPolicy> {
    let total = n_actions.pow(n_states as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..n_states)
                .map(|_| {
                    let a = code % n_actions;
                    code /= n_actions;
                    a
                })
                .collect();
            StationaryPolicy::deterministic(n_actions, &actions).unwrap()
        })
        .collect()
}
