//! Layered run settings. Each knob resolves from, in order: the
//! command-line flag, a `GAPNET_*` environment variable, a flat
//! `key = value` settings file, then the built-in default. Every resolved
//! value is recorded so a run can be fingerprinted and reproduced.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use gapnet_core::wire::Fnv64;

use crate::CliError;

pub const ENV_PREFIX: &str = "GAPNET_";

#[derive(Debug)]
pub struct Settings {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn empty() -> Self {
        Settings {
            file: BTreeMap::new(),
            resolved: BTreeMap::new(),
        }
    }

    /// Loads the optional settings file. Lines are `key = value`; blank
    /// lines and `#` comments are skipped.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut settings = Settings::empty();
        let Some(path) = path else {
            return Ok(settings);
        };
        let text = std::fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(crate::invalid(format!(
                    "{}:{}: expected key = value, got {raw:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            settings
                .file
                .insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(settings)
    }

    fn env_key(key: &str) -> String {
        format!("{ENV_PREFIX}{}", key.to_uppercase())
    }

    fn lookup(&self, key: &str) -> Option<(String, &'static str)> {
        if let Ok(v) = std::env::var(Self::env_key(key)) {
            return Some((v, "environment"));
        }
        self.file.get(key).map(|v| (v.clone(), "settings file"))
    }

    /// Resolves one knob and records the winning value.
    pub fn resolve<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.lookup(key) {
                Some((raw, origin)) => raw.parse().map_err(|e| {
                    crate::invalid(format!("{origin} value {raw:?} for {key}: {e}"))
                })?,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// The knobs this command actually resolved, in key order.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    /// FNV-1a fingerprint over the resolved `key=value` set. Stable across
    /// runs with identical effective settings regardless of which layer
    /// supplied each value.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::new();
        for (k, v) in &self.resolved {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        h.finish()
    }
}
