//! Effective parameters of a run: defaults, then `--config`, then
//! `--set`, then explicit flags. The merged set is written verbatim as
//! `config.lock` and can be fed back through `--config`.

use std::fs;
use std::path::{Path, PathBuf};

use nasalgan::kv::KeyValues;

use crate::error::CliError;

pub struct Params {
    pub command: &'static str,
    pub kv: KeyValues,
}

impl Params {
    /// `allowed` lists every key the command understands; anything else is
    /// a usage error so typos never pass silently.
    pub fn build(
        command: &'static str,
        allowed: &[&str],
        config: Option<&Path>,
        sets: &[String],
        flags: Vec<(&str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut kv = KeyValues::new();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            let file = KeyValues::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            if let Some(c) = file.get_str("command") {
                if c != command {
                    return Err(CliError::Usage(format!(
                        "{} was written by `{c}`, not `{command}`",
                        path.display()
                    )));
                }
            }
            kv.merge(&file);
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got {s:?}")))?;
            kv.set(k.trim(), v.trim());
        }
        for (k, v) in flags {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        kv.set("command", command);
        for (k, _) in kv.entries.iter() {
            if k != "command" && !allowed.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("`{command}` has no parameter {k:?}")));
            }
        }
        Ok(Self { command, kv })
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.kv.get_str(key).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.str(key)
            .ok_or_else(|| CliError::Usage(format!("`{}` needs --{}", self.command, key.replace('_', "-"))))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.require(key).map(PathBuf::from)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self
            .kv
            .get(key)
            .map_err(|e| CliError::Usage(format!("--{}: {e}", key.replace('_', "-"))))?
            .unwrap_or(default))
    }

    /// Records `key` with the value actually used, so the lock is complete.
    pub fn record(&mut self, key: &str, value: impl std::fmt::Display) {
        self.kv.set(key, value);
    }

    pub fn lock_text(&self) -> String {
        self.kv.to_string()
    }
}
