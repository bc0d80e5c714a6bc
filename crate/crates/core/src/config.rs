//! Flat `key=value` experiment files mirroring command-line flags.
//!
//! ```text
//! # comment
//! estimator=psa
//! samples=10000
//! auto-lr=true
//! ```
//!
//! Each entry becomes `--key value` (`--key` alone for `true`, nothing for
//! `false`), placed before the real command-line arguments so that flags
//! given on the command line win.

use std::path::Path;

use crate::error::{Result, SbnError};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExperimentConfig {
    pub entries: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| SbnError::parse(i + 1, format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.starts_with('-') || k.contains(char::is_whitespace) {
                return Err(SbnError::parse(i + 1, format!("bad key {k:?}")));
            }
            if entries.iter().any(|(e, _)| e == k) {
                return Err(SbnError::parse(i + 1, format!("duplicate key {k:?}")));
            }
            entries.push((k.to_string(), v.to_string()));
        }
        Ok(ExperimentConfig { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SbnError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Sets `key`, keeping the position of an existing entry.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn to_args(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (k, v) in &self.entries {
            match v.as_str() {
                "true" => out.push(format!("--{k}")),
                "false" => {}
                _ => {
                    out.push(format!("--{k}"));
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
