//! `key = value` text configuration, one entry per line, `#` starts a comment.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    what: &'static str,
    // key -> (line, value)
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(what: &'static str, text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { what, line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            if entries.insert(key.to_string(), (i + 1, value.trim().to_string())).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyValues { what, entries })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Sets `key`, replacing any value read from the text. Overrides report
    /// line 0 in errors.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    /// Remaining entries as `key = value` lines in key order, so texts that
    /// differ only in layout, order or comments render identically.
    pub fn canonical_text(&self) -> String {
        self.entries.iter().map(|(k, (_, v))| format!("{k} = {v}\n")).collect()
    }

    /// Removes and returns the raw value of `key`.
    pub fn take_str(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    /// Removes `key` and parses its value.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| Error::Parse {
                what: self.what,
                line,
                msg: format!("bad value `{v}` for `{key}`: {e}"),
            }),
        }
    }

    pub fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Removes `key` and parses its comma-separated values.
    pub fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        let Some((line, v)) = self.entries.remove(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| Error::Parse {
                    what: self.what,
                    line,
                    msg: format!("bad list item `{s}` for `{key}`: {e}"),
                })
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Fails if any key was never taken.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(Error::Parse { what: self.what, line, msg: format!("unknown key `{key}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_tracks_unknown_keys() {
        let mut kv = KeyValues::parse("test", "# c\na = 3\nb=0.5 # trailing\ncols = 0, 3\nzzz = 1\n").unwrap();
        assert_eq!(kv.take::<usize>("a").unwrap(), Some(3));
        assert_eq!(kv.take_or("b", 0.0).unwrap(), 0.5);
        assert_eq!(kv.take_list::<usize>("cols").unwrap(), Some(vec![0, 3]));
        assert_eq!(kv.take::<usize>("missing").unwrap(), None);
        assert!(matches!(kv.finish(), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn canonical_text_ignores_layout() {
        let a = KeyValues::parse("test", "b = 2\n# comment\na=1\n").unwrap();
        let mut b = KeyValues::parse("test", "a = 1\nb = 3").unwrap();
        assert_ne!(a.canonical_text(), b.canonical_text());
        b.set("b", "2");
        assert_eq!(a.canonical_text(), "a = 1\nb = 2\n");
        assert_eq!(a.canonical_text(), b.canonical_text());
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("test", "novalue\n").is_err());
        assert!(KeyValues::parse("test", "a = 1\na = 2\n").is_err());
        let mut kv = KeyValues::parse("test", "a = x\n").unwrap();
        assert!(matches!(kv.take::<f64>("a"), Err(Error::Parse { line: 1, .. })));
    }
}
