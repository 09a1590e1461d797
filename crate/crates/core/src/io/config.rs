use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("[{section}] {key} = '{value}': {message}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        message: String,
    },
}

/// Flat `key = value` text with `[section]` headers.
///
/// Keys before the first header belong to the unnamed section `""`. Blank
/// lines and lines starting with `#` or `;` are ignored. Sections and keys
/// are kept sorted so the rendered form is canonical.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = KvConfig::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line: i + 1,
                    message: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: "empty key".into(),
                });
            }
            cfg.set(&section, key, v.trim());
        }
        Ok(cfg)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl fmt::Display) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get_str(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    /// Parsed value, or `None` if the key is absent.
    pub fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get_str(section, key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| ConfigError::BadValue {
                section: section.into(),
                key: key.into(),
                value: v.into(),
                message: e.to_string(),
            }),
        }
    }

    pub fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(section, key)?.ok_or_else(|| ConfigError::Missing {
            section: section.into(),
            key: key.into(),
        })
    }

    /// Overlays `other` on top of `self`.
    pub fn merge(&mut self, other: &KvConfig) {
        for (s, kv) in &other.sections {
            for (k, v) in kv {
                self.set(s, k, v);
            }
        }
    }

    /// All `(section, key, value)` triples in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.sections
            .iter()
            .flat_map(|(s, kv)| kv.iter().map(move |(k, v)| (s.as_str(), k.as_str(), v.as_str())))
    }

    pub fn is_empty(&self) -> bool {
        self.sections.values().all(BTreeMap::is_empty)
    }
}

impl fmt::Display for KvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, kv) in &self.sections {
            if kv.is_empty() {
                continue;
            }
            if !s.is_empty() {
                if !first {
                    writeln!(f)?;
                }
                writeln!(f, "[{s}]")?;
            }
            for (k, v) in kv {
                writeln!(f, "{k} = {v}")?;
            }
            first = false;
        }
        Ok(())
    }
}
