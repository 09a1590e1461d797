//! Resolution of a run configuration: config file, then flag overrides, then
//! defaults. Every value read is recorded so the resolved configuration can
//! be written back and re-run.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use leverage_trust::io::KvConfig;

use crate::error::CliError;

pub struct Resolver {
    input: KvConfig,
    resolved: KvConfig,
    used: BTreeSet<(String, String)>,
}

impl Resolver {
    /// Loads `file` (if any) and overlays `flags`.
    pub fn load(file: Option<&Path>, flags: &KvConfig) -> Result<Self, CliError> {
        let mut input = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                KvConfig::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
            }
            None => KvConfig::new(),
        };
        input.merge(flags);
        Ok(Resolver {
            input,
            resolved: KvConfig::new(),
            used: BTreeSet::new(),
        })
    }

    fn mark(&mut self, section: &str, key: &str) {
        self.used.insert((section.to_string(), key.to_string()));
    }

    pub fn optional<T>(&mut self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.mark(section, key);
        let v = self.input.get::<T>(section, key)?;
        if let Some(raw) = self.input.get_str(section, key) {
            self.resolved.set(section, key, raw);
        }
        Ok(v)
    }

    pub fn value<T>(&mut self, section: &str, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.optional(section, key)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.set(section, key, &default);
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, section: &str, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.optional(section, key)?
            .ok_or_else(|| CliError::config(format!("missing required key [{section}] {key}")))
    }

    /// A comma-separated list.
    pub fn list<T>(&mut self, section: &str, key: &str, default: &[T]) -> Result<Vec<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let default_text = default.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let text: String = self.value(section, key, default_text)?;
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| CliError::config(format!("[{section}] {key}: '{s}': {e}")))
            })
            .collect()
    }

    /// Checks that every supplied key was understood and returns the
    /// resolved configuration.
    pub fn finish(self) -> Result<KvConfig, CliError> {
        let unknown: Vec<String> = self
            .input
            .entries()
            .filter(|(s, k, _)| !self.used.contains(&(s.to_string(), k.to_string())))
            .map(|(s, k, _)| {
                if s.is_empty() {
                    k.to_string()
                } else {
                    format!("[{s}] {k}")
                }
            })
            .collect();
        if !unknown.is_empty() {
            return Err(CliError::config(format!("unknown keys: {}", unknown.join(", "))));
        }
        Ok(self.resolved)
    }
}

/// Flag overrides collected into the same shape as a config file.
#[derive(Default)]
pub struct Overrides(pub KvConfig);

impl Overrides {
    pub fn set<T: Display>(&mut self, section: &str, key: &str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.set(section, key, v);
        }
        self
    }
}
