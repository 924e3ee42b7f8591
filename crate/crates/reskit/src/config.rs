//! Flat key/value configuration: built-in defaults, then an INI-style file,
//! then `key=value` overrides from the command line.
//!
//! File syntax: `key = value` lines, `#` or `;` comments, and `[section]`
//! headers. Keys before any header apply to every experiment; keys under
//! `[name]` apply only when running experiment `name`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}`")]
    Parse { key: String, value: String },
    #[error("key `{0}` is missing")]
    Missing(String),
    #[error("{0}")]
    Invalid(String),
}

/// Keys that do not change results and so stay out of the hash.
const NON_SEMANTIC: &[&str] = &["workers", "out"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_defaults(defaults: &[(&str, &str)]) -> Self {
        Self {
            values: defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }

    /// Sets a key that must already exist (i.e. have a default).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            msg: format!("expected key=value, got `{pair}`"),
        })?;
        self.set(k.trim(), v)
    }

    /// Applies the global lines and the `[section]` lines of an INI text.
    pub fn apply_ini(&mut self, text: &str, section: &str) -> Result<(), ConfigError> {
        let mut current: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: n + 1,
                    msg: "unterminated section header".into(),
                })?;
                current = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: "expected key = value".into(),
            })?;
            match &current {
                Some(s) if s != section => continue,
                _ => self.set(k.trim(), v)?,
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Result<&str, ConfigError> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| ConfigError::Parse {
            key: key.to_string(),
            value: v.to_string(),
        })
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError> {
        let v = self.raw(key)?;
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| ConfigError::Parse {
                    key: key.to_string(),
                    value: s.to_string(),
                })
            })
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }

    /// SHA-256 over the sorted semantic `key=value` lines, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if NON_SEMANTIC.contains(&k.as_str()) {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First 12 hex digits of [`Config::hash`], used in CSV rows.
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

/// Positive-value check used by experiment configs.
pub fn require_positive<T: PartialOrd + Default + Display>(key: &str, v: T) -> Result<T, ConfigError> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(ConfigError::Invalid(format!("`{key}` must be positive, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Config {
        Config::from_defaults(&[("alpha", "0.01"), ("n_list", "1,2"), ("workers", "1")])
    }

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let mut c = base();
        c.apply_ini("alpha = 0.5\n[predict]\nn_list = 4, 8\n[timing]\nn_list = 9", "predict").unwrap();
        assert_eq!(c.get::<f64>("alpha").unwrap(), 0.5);
        assert_eq!(c.list::<usize>("n_list").unwrap(), vec![4, 8]);
        c.set_pair("alpha=2").unwrap();
        assert_eq!(c.get::<f64>("alpha").unwrap(), 2.0);
    }

    #[test]
    fn errors() {
        let mut c = base();
        assert!(matches!(c.set_pair("nope=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(c.apply_ini("alpha 3", "x"), Err(ConfigError::Syntax { line: 1, .. })));
        c.set("alpha", "abc").unwrap();
        assert!(matches!(c.get::<f64>("alpha"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn hash_tracks_semantic_fields_only() {
        let a = base();
        let mut b = base();
        b.set("workers", "8").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("alpha", "0.02").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}
