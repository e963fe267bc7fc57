//! Ensemble beliefs over reward functions.
//!
//! A [`RewardEnsemble`] is an ordered queue of reward tables, each standing
//! in for one sample from an implicit posterior. By default draws pull the
//! next members off the queue and fail once it runs dry; with replacement
//! enabled, draws are independent uniform picks from a seeded stream.
//!
//! On disk an ensemble is a directory holding `ensemble.manifest` (header
//! `CAUTIOUS-ENS v1`, then one member filename per line in queue order) and
//! one reward-table file per member.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mdp::format::{read_reward, write_atomic, write_reward};
use crate::mdp::{RewardLayout, RewardTable, StateActionValues};
use crate::rng::{stream_rng, Stream};

pub const MANIFEST_NAME: &str = "ensemble.manifest";
pub const MANIFEST_HEADER: &str = "CAUTIOUS-ENS v1";

#[derive(Debug, Clone)]
pub struct RewardEnsemble {
    members: Vec<Arc<RewardTable>>,
    cursor: usize,
    replacement: bool,
    rng: ChaCha8Rng,
}

impl RewardEnsemble {
    /// Queue over `members` in the given order, without replacement. All
    /// members must share a shape; their bounds are raised to the common
    /// maximum.
    pub fn new(members: Vec<RewardTable>) -> Result<Self> {
        Self::from_shared(members.into_iter().map(Arc::new).collect())
    }

    fn from_shared(members: Vec<Arc<RewardTable>>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let (n_states, n_actions) = (first.n_states(), first.n_actions());
        let bound = members.iter().fold(0.0_f64, |m, t| m.max(t.bound()));
        let mut shared = Vec::with_capacity(members.len());
        for m in members {
            m.check_shape(n_states, n_actions)?;
            if m.bound() == bound {
                shared.push(m);
            } else {
                let t = Arc::unwrap_or_clone(m);
                shared.push(Arc::new(RewardTable::new(
                    t.n_states(),
                    t.n_actions(),
                    t.layout(),
                    t.values().to_vec(),
                    bound,
                )?));
            }
        }
        Ok(RewardEnsemble { members: shared, cursor: 0, replacement: false, rng: stream_rng(0, Stream::Draw) })
    }

    /// Switches to independent uniform draws seeded by `seed`.
    pub fn with_replacement(mut self, seed: u64) -> Self {
        self.replacement = true;
        self.rng = stream_rng(seed, Stream::Draw);
        self
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, i: usize) -> &RewardTable {
        &self.members[i]
    }

    pub fn members(&self) -> impl Iterator<Item = &RewardTable> {
        self.members.iter().map(|m| m.as_ref())
    }

    pub fn n_states(&self) -> usize {
        self.members[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.members[0].n_actions()
    }

    /// Common reward bound `U`.
    pub fn bound(&self) -> f64 {
        self.members[0].bound()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn replacement(&self) -> bool {
        self.replacement
    }

    /// Members left in the queue (unbounded with replacement).
    pub fn remaining(&self) -> usize {
        if self.replacement {
            usize::MAX
        } else {
            self.members.len() - self.cursor
        }
    }

    /// Seeded permutation of the queue; resets the cursor.
    pub fn shuffle(&mut self, seed: u64) {
        let mut rng = stream_rng(seed, Stream::Shuffle);
        self.members.shuffle(&mut rng);
        self.cursor = 0;
    }

    /// Positions (in current queue order) of the next `n` members.
    pub fn draw_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.replacement {
            let len = self.members.len();
            return Ok((0..n).map(|_| self.rng.gen_range(0..len)).collect());
        }
        let remaining = self.members.len() - self.cursor;
        if n > remaining {
            return Err(Error::Exhausted { requested: n, remaining });
        }
        let out = (self.cursor..self.cursor + n).collect();
        self.cursor += n;
        Ok(out)
    }

    pub fn draw(&mut self, n: usize) -> Result<Vec<&RewardTable>> {
        let idx = self.draw_indices(n)?;
        Ok(idx.into_iter().map(|i| self.members[i].as_ref()).collect())
    }

    /// Elementwise mean over members.
    pub fn mean_reward(&self) -> Result<RewardTable> {
        RewardTable::mean(self.members())
    }

    /// Ensemble over the sub-tables for `states`, keeping order, cursor and
    /// draw mode.
    pub fn restrict(&self, states: &[usize]) -> Result<Self> {
        let members = self
            .members
            .iter()
            .map(|m| m.restrict(states).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(RewardEnsemble { members, cursor: self.cursor, replacement: self.replacement, rng: self.rng.clone() })
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::from(MANIFEST_HEADER);
        manifest.push('\n');
        for (i, m) in self.members.iter().enumerate() {
            let name = format!("member_{i:05}.rew");
            write_reward(&dir.join(&name), m)?;
            manifest.push_str(&name);
            manifest.push('\n');
        }
        write_atomic(&dir.join(MANIFEST_NAME), &manifest)
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::Parse { what: "ensemble manifest", line: 1, msg: "bad header".into() });
        }
        let members = lines.map(|name| read_reward(&dir.join(name))).collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }
}

/// Ensemble of `base + ε` with `ε(s,a,s') ~ N(0, noise_scale(s,a)²)` drawn
/// independently per member and entry, clipped to
/// `U = max|base| + 6 max(noise_scale)`. Members use the full layout.
pub fn synthetic_belief(
    base: &RewardTable,
    noise_scale: &StateActionValues,
    members: usize,
    seed: u64,
) -> Result<RewardEnsemble> {
    let (n_states, n_actions) = (base.n_states(), base.n_actions());
    if noise_scale.n_states() != n_states || noise_scale.n_actions() != n_actions {
        return Err(Error::shape("noise scale shape differs from the base table"));
    }
    if noise_scale.as_slice().iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::config("noise scale must be nonnegative"));
    }
    if members == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let base = base.to_full();
    let max_noise = noise_scale.as_slice().iter().fold(0.0_f64, |m, &x| m.max(x));
    let max_base = base.values().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let bound = max_base + 6.0 * max_noise;
    let mut rng = stream_rng(seed, Stream::Noise);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut tables = Vec::with_capacity(members);
    for _ in 0..members {
        let mut values = base.values().to_vec();
        for s in 0..n_states {
            for a in 0..n_actions {
                let sd = noise_scale.get(s, a);
                let start = (s * n_actions + a) * n_states;
                for v in &mut values[start..start + n_states] {
                    let eps: f64 = std_normal.sample(&mut rng);
                    *v = (*v + sd * eps).clamp(-bound, bound);
                }
            }
        }
        tables.push(RewardTable::new(n_states, n_actions, RewardLayout::Full, values, bound)?);
    }
    RewardEnsemble::new(tables)
}
