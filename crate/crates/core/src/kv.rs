//! Flat `key = value` text files, used for configs, logs and reports.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parse into ordered pairs, rejecting malformed lines and repeated keys.
pub fn parse(text: &str, source: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source.into(), line: i + 1, msg };
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("empty key".into()));
        }
        if out.iter().any(|(x, _)| x == k) {
            return Err(err(format!("duplicate key `{k}`")));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

pub fn to_text(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Parse one value, naming the key on failure.
pub fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{raw}`")))
}

/// Parse a comma-separated list.
pub fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| value(key, s)).collect()
}

/// A config that can be read from and written to flat key-value pairs.
pub trait KvConfig {
    /// Apply one entry. Returns `Ok(false)` if the key is not recognised.
    fn set(&mut self, key: &str, value: &str) -> Result<bool>;

    /// Every key with its current value, in a stable order.
    fn entries(&self) -> Vec<(String, String)>;

    /// Apply entries in order; unknown keys are an error.
    fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs {
            if !self.set(k, v)? {
                return Err(Error::UnknownKey(k.clone()));
            }
        }
        Ok(())
    }

    fn to_kv_text(&self) -> String {
        to_text(&self.entries())
    }
}
