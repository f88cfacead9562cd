//! Flat `key = value` text format shared by scenario and run-config files.
//!
//! Blank lines and lines starting with `#` or `;` are ignored; a trailing
//! `# comment` after a value is stripped. Keys are case-sensitive and may
//! appear once.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}", lineno + 1), format!("expected key = value, got {raw:?}"))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::invalid(format!("line {}", lineno + 1), "empty key"));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::invalid(k, "duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `key` if present.
    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| Error::invalid(key, format!("{v:?}: {e}"))),
        }
    }

    /// Rejects any key not listed in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::invalid(k, "unknown key")),
            None => Ok(()),
        }
    }

    /// Canonical `key = value` rendering, sorted by key.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let kv = KvMap::parse("# header\nsteps = 500\n\nmean=50.5 # trailing\n").unwrap();
        assert_eq!(kv.parsed::<usize>("steps").unwrap(), Some(500));
        assert_eq!(kv.parsed::<f64>("mean").unwrap(), Some(50.5));
        assert_eq!(kv.parsed::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn rejects_garbage_duplicates_and_unknown_keys() {
        assert!(KvMap::parse("just text").is_err());
        assert!(KvMap::parse("a = 1\na = 2").is_err());
        let kv = KvMap::parse("a = 1\nb = x").unwrap();
        assert!(kv.check_keys(&["a"]).is_err());
        let err = kv.parsed::<f64>("b").unwrap_err();
        assert!(err.to_string().contains('b'));
    }
}
