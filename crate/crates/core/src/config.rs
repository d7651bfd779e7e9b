//! Line-oriented `key=value` configuration files.
//!
//! The format is deliberately plain: one `key=value` entry per line,
//! `#` starts a comment, blank lines are ignored. Keys may contain
//! spaces (`spectrum adulteration 0.05=...`), values are trimmed.
//! When a scalar key appears more than once the last entry wins;
//! prefix queries see every entry in file order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: Vec<(String, String)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!(
                    "line {}: expected key=value, got {:?}",
                    lineno + 1,
                    raw
                ))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", lineno + 1)));
            }
            entries.push((key.to_string(), value.trim().to_string()));
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Last value recorded for `key`, if any.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("missing key {key:?}")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse::<usize>()
                    .map_err(|_| Error::config(format!("key {key:?}: {v:?} is not an integer")))
            })
            .transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.require(key)?)
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse::<usize>()
            .map_err(|_| Error::config(format!("key {key:?}: {v:?} is not an integer")))
    }

    /// Comma- or whitespace-separated list of reals.
    pub fn require_f64_list(&self, key: &str) -> Result<Vec<f64>> {
        parse_f64_list(key, self.require(key)?)
    }

    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_f64_list(key, v)).transpose()
    }

    /// All entries whose key starts with `prefix`, in file order, with the
    /// prefix stripped and the remainder trimmed.
    pub fn entries_with_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest.trim(), v.as_str())))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .parse::<f64>()
        .map_err(|_| Error::config(format!("key {key:?}: {value:?} is not a number")))
}

pub fn parse_f64_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(Error::config(format!("key {key:?}: empty list")));
    }
    parts.into_iter().map(|p| parse_f64(key, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_lists() {
        let cfg = Config::parse(
            "# comment\nwidth=48\nnoise_sigma=8, 8 ,8\nspectrum adulteration 0.05=1,2,3\nwidth=50\n",
        )
        .unwrap();
        assert_eq!(cfg.require_usize("width").unwrap(), 50);
        assert_eq!(cfg.require_f64_list("noise_sigma").unwrap(), vec![8.0; 3]);
        let spectra: Vec<_> = cfg.entries_with_prefix("spectrum adulteration").collect();
        assert_eq!(spectra, vec![("0.05", "1,2,3")]);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("just a line\n").is_err());
        assert!(Config::parse("=value\n").is_err());
        let cfg = Config::parse("k=not_a_number\n").unwrap();
        assert!(cfg.require_f64("k").is_err());
    }
}
