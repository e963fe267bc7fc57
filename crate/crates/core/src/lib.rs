//! Cautious policies from ensemble reward beliefs.
//!
//! The crate learns policies that are robust to epistemic uncertainty about
//! the reward function of a finite discounted MDP. A belief is an ensemble of
//! reward tables (usually small neural networks trained on familiar data and
//! tabulated over the states of a possibly novel MDP); k-of-N counterfactual
//! regret minimization then optimizes the policy against the `k` worst of `N`
//! sampled tables on every iteration.
//!
//! Modules, bottom up:
//!
//! * [`mdp`]: MDPs, reward tables, policies and their text formats.
//! * [`eval`]: exact policy evaluation, q-values, advantages, discounted
//!   state distributions and greedy optimal policies.
//! * [`regret`]: per-state regret matching.
//! * [`belief`]: reward ensembles consumed as queues.
//! * [`config`]: `key = value` configuration text.
//! * [`kofn`]: the k-of-N CFR loop, robust value estimates and regret curves.
//! * [`trainer`]: small rectifier networks used as reward models.
//! * [`driving`]: the driving gridworld.
//! * [`bandit`]: contextual-bandit caution tasks.

pub mod bandit;
pub mod belief;
pub mod config;
pub mod driving;
pub mod error;
pub mod eval;
pub mod kofn;
pub mod mdp;
pub mod regret;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
