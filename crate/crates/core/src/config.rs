//! `key = value` configuration files.
//!
//! One entry per line, `#` starts a comment, surrounding whitespace is
//! ignored. Keys are unique; unknown keys are rejected by the consumer.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    origin: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KvConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Config {
                path: origin.to_string(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_err("empty key".into()));
            }
            if entries
                .insert(key.to_string(), (value.to_string(), line_no))
                .is_some()
            {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
        }
        Ok(KvConfig {
            origin: origin.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|e| Error::Config {
                path: self.origin.clone(),
                line: *line,
                message: format!("{key}: cannot parse {v:?}: {e}"),
            }),
        }
    }

    /// Fails on the first key not in `allowed`.
    pub fn ensure_known(&self, allowed: &[&str]) -> Result<()> {
        for (key, (_, line)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::Config {
                    path: self.origin.clone(),
                    line: *line,
                    message: format!("unknown key {key:?}"),
                });
            }
        }
        Ok(())
    }
}
