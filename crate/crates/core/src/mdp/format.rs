//! Line-oriented text formats for MDPs, reward tables and policies.
//!
//! Each file starts with a header line (`CAUTIOUS-MDP v1`, `CAUTIOUS-REW v1`
//! or `CAUTIOUS-POL v1`), followed by a line of space-separated dimensions,
//! then rows of `f64` values rendered as shortest round-trip decimal text.
//!
//! ```text
//! CAUTIOUS-MDP v1          CAUTIOUS-REW v1              CAUTIOUS-POL v1
//! <S> <A>                  <S> <A> <layout>             <S> <A>
//! <discount>               <bound>                      S rows of A values
//! <initial: S values>      rows (see RewardLayout)
//! S*A rows of S values
//! ```
//!
//! Reward rows: `full` has `S*A` rows of `S` values, `state-action` has `S`
//! rows of `A` values, `state-pair` has `S` rows of `S` values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RewardLayout, RewardTable, StationaryPolicy, TabularMdp};
use crate::error::{Error, Result};

pub const MDP_HEADER: &str = "CAUTIOUS-MDP v1";
pub const REWARD_HEADER: &str = "CAUTIOUS-REW v1";
pub const POLICY_HEADER: &str = "CAUTIOUS-POL v1";

/// Writes `values` as one space-separated line of shortest round-trip floats.
pub(crate) fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        // Debug formatting is the shortest representation that round-trips
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

/// Sequential reader over the non-empty lines of a text document.
pub(crate) struct Lines<'a> {
    what: &'static str,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    pub(crate) fn new(what: &'static str, text: &'a str) -> Self {
        Lines { what, inner: text.lines().enumerate(), line: 0 }
    }

    pub(crate) fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse { what: self.what, line: self.line, msg: msg.into() }
    }

    pub(crate) fn next_line(&mut self) -> Result<&'a str> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.trim());
            }
        }
        Err(Error::Parse { what: self.what, line: self.line + 1, msg: "unexpected end of input".into() })
    }

    pub(crate) fn expect_header(&mut self, header: &str) -> Result<()> {
        let line = self.next_line()?;
        if line != header {
            return Err(self.error(format!("expected header `{header}`, found `{line}`")));
        }
        Ok(())
    }

    pub(crate) fn tokens(&mut self) -> Result<Vec<&'a str>> {
        Ok(self.next_line()?.split_whitespace().collect())
    }

    pub(crate) fn usizes(&mut self, n: usize) -> Result<Vec<usize>> {
        let toks = self.tokens()?;
        if toks.len() != n {
            return Err(self.error(format!("expected {n} integers, found {}", toks.len())));
        }
        toks.iter()
            .map(|t| t.parse::<usize>().map_err(|e| self.error(format!("`{t}`: {e}"))))
            .collect()
    }

    pub(crate) fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let toks = self.tokens()?;
        if toks.len() != n {
            return Err(self.error(format!("expected {n} values, found {}", toks.len())));
        }
        toks.iter()
            .map(|t| t.parse::<f64>().map_err(|e| self.error(format!("`{t}`: {e}"))))
            .collect()
    }

    pub(crate) fn float_rows(&mut self, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            out.extend(self.floats(cols)?);
        }
        Ok(out)
    }

    pub(crate) fn finish(&mut self) -> Result<()> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Err(self.error("trailing content"));
            }
        }
        Ok(())
    }
}

pub fn mdp_to_string(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    out.push_str(MDP_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", mdp.n_states(), mdp.n_actions());
    push_row(&mut out, &[mdp.discount()]);
    push_row(&mut out, mdp.initial_dist());
    for row in mdp.raw_transition().chunks(mdp.n_states()) {
        push_row(&mut out, row);
    }
    out
}

pub fn mdp_from_str(text: &str) -> Result<TabularMdp> {
    let mut lines = Lines::new("MDP file", text);
    lines.expect_header(MDP_HEADER)?;
    let dims = lines.usizes(2)?;
    let (n_states, n_actions) = (dims[0], dims[1]);
    let discount = lines.floats(1)?[0];
    let initial = lines.floats(n_states)?;
    let transition = lines.float_rows(n_states * n_actions, n_states)?;
    lines.finish()?;
    TabularMdp::new(n_states, n_actions, transition, initial, discount)
}

pub fn reward_to_string(reward: &RewardTable) -> String {
    let mut out = String::new();
    out.push_str(REWARD_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {} {}", reward.n_states(), reward.n_actions(), reward.layout().name());
    push_row(&mut out, &[reward.bound()]);
    let width = match reward.layout() {
        RewardLayout::StateAction => reward.n_actions(),
        RewardLayout::Full | RewardLayout::StatePair => reward.n_states(),
    };
    for row in reward.values().chunks(width) {
        push_row(&mut out, row);
    }
    out
}

pub fn reward_from_str(text: &str) -> Result<RewardTable> {
    let mut lines = Lines::new("reward file", text);
    lines.expect_header(REWARD_HEADER)?;
    let toks = lines.tokens()?;
    if toks.len() != 3 {
        return Err(lines.error("expected `<states> <actions> <layout>`"));
    }
    let parse = |t: &str| t.parse::<usize>().map_err(|e| lines.error(format!("`{t}`: {e}")));
    let n_states = parse(toks[0])?;
    let n_actions = parse(toks[1])?;
    let layout = RewardLayout::from_name(toks[2])
        .ok_or_else(|| lines.error(format!("unknown layout `{}`", toks[2])))?;
    let bound = lines.floats(1)?[0];
    let (rows, cols) = match layout {
        RewardLayout::Full => (n_states * n_actions, n_states),
        RewardLayout::StateAction => (n_states, n_actions),
        RewardLayout::StatePair => (n_states, n_states),
    };
    let values = lines.float_rows(rows, cols)?;
    lines.finish()?;
    RewardTable::new(n_states, n_actions, layout, values, bound)
}

pub fn policy_to_string(policy: &StationaryPolicy) -> String {
    let mut out = String::new();
    out.push_str(POLICY_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", policy.n_states(), policy.n_actions());
    for s in 0..policy.n_states() {
        push_row(&mut out, policy.row(s));
    }
    out
}

pub fn policy_from_str(text: &str) -> Result<StationaryPolicy> {
    let mut lines = Lines::new("policy file", text);
    lines.expect_header(POLICY_HEADER)?;
    let dims = lines.usizes(2)?;
    let probs = lines.float_rows(dims[0], dims[1])?;
    lines.finish()?;
    StationaryPolicy::new(dims[0], dims[1], probs)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and a rename so readers never see
/// a partially written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_mdp(path: &Path) -> Result<TabularMdp> {
    mdp_from_str(&read_text(path)?)
}

pub fn write_mdp(path: &Path, mdp: &TabularMdp) -> Result<()> {
    write_atomic(path, &mdp_to_string(mdp))
}

pub fn read_reward(path: &Path) -> Result<RewardTable> {
    reward_from_str(&read_text(path)?)
}

pub fn write_reward(path: &Path, reward: &RewardTable) -> Result<()> {
    write_atomic(path, &reward_to_string(reward))
}

pub fn read_policy(path: &Path) -> Result<StationaryPolicy> {
    policy_from_str(&read_text(path)?)
}

pub fn write_policy(path: &Path, policy: &StationaryPolicy) -> Result<()> {
    write_atomic(path, &policy_to_string(policy))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn arb_mdp() -> impl Strategy<Value = TabularMdp> {
        (1usize..4, 1usize..4).prop_flat_map(|(n, a)| {
            (
                prop::collection::vec(0.0f64..1.0, n * a * n),
                prop::collection::vec(0.0f64..1.0, n),
                0.0f64..0.999,
            )
                .prop_map(move |(t, d, g)| TabularMdp::new(n, a, t, d, g).unwrap())
        })
    }

    proptest! {
        #[test]
        fn mdp_round_trip_is_bit_exact(mdp in arb_mdp()) {
            let back = mdp_from_str(&mdp_to_string(&mdp)).unwrap();
            prop_assert_eq!(back, mdp);
        }

        #[test]
        fn reward_round_trip_is_bit_exact(
            vals in prop::collection::vec(-1e6f64..1e6, 12),
            layout in prop::sample::select(vec![RewardLayout::StateAction, RewardLayout::StatePair, RewardLayout::Full]),
        ) {
            // 2 states x 3 actions
            let n = layout.len(2, 3);
            let values: Vec<f64> = vals.iter().cycle().take(n).map(|v| v / 7.0).collect();
            let table = RewardTable::with_tight_bound(2, 3, layout, values).unwrap();
            let back = reward_from_str(&reward_to_string(&table)).unwrap();
            prop_assert_eq!(back, table);
        }

        #[test]
        fn policy_round_trip_is_bit_exact(w in prop::collection::vec(0.01f64..1.0, 6)) {
            let mut probs = Vec::new();
            for row in w.chunks(3) {
                let total: f64 = row.iter().sum();
                let r: Vec<f64> = row.iter().map(|x| x / total).collect();
                let last = 1.0 - r[0] - r[1];
                probs.extend([r[0], r[1], last]);
            }
            let policy = StationaryPolicy::new(2, 3, probs).unwrap();
            prop_assert_eq!(policy_from_str(&policy_to_string(&policy)).unwrap(), policy);
        }
    }

    #[test]
    fn rejects_wrong_header_and_truncation() {
        let pi = StationaryPolicy::uniform(2, 2);
        let text = policy_to_string(&pi);
        assert!(matches!(mdp_from_str(&text), Err(Error::Parse { .. })));
        let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(policy_from_str(&truncated).is_err());
    }

    #[test]
    fn writes_are_atomic_and_readable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.rew");
        let r = RewardTable::constant(2, 2, 0.1);
        write_reward(&path, &r).unwrap();
        assert_eq!(read_reward(&path).unwrap(), r);
        assert!(!dir.path().join("r.rew.tmp").exists());
    }
}
