//! Key=value run configuration with per-command key tables.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file, `--set`
//! overrides, then the global flags. Every accepted key is known in advance;
//! anything else is a usage error naming the key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// One accepted key. `default: None` means the key has no value unless set.
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
}

pub const fn key(name: &'static str, default: &'static str) -> Key {
    Key {
        name,
        default: Some(default),
    }
}

pub const fn optional(name: &'static str) -> Key {
    Key {
        name,
        default: None,
    }
}

/// Keys accepted by every command; the matching flags override them.
pub const GLOBAL_KEYS: [Key; 3] = [key("seed", "0"), key("jobs", "1"), key("out", ".")];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: &'static str,
    values: BTreeMap<String, String>,
}

fn parse_line(line: &str) -> Option<Result<(String, String), ()>> {
    let line = line.split_once('#').map_or(line, |(l, _)| l).trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(()),
    })
}

impl RunConfig {
    pub fn resolve(
        command: &'static str,
        keys: &[Key],
        file: Option<&Path>,
        overrides: &[String],
    ) -> Result<Self, CliError> {
        let known = |k: &str| keys.iter().chain(&GLOBAL_KEYS).any(|key| key.name == k);
        let mut values: BTreeMap<String, String> = keys
            .iter()
            .chain(&GLOBAL_KEYS)
            .filter_map(|k| k.default.map(|d| (k.name.to_string(), d.to_string())))
            .collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (n, line) in text.lines().enumerate() {
                let where_ = format!("{}:{}", path.display(), n + 1);
                match parse_line(line) {
                    None => {}
                    Some(Err(())) => {
                        return Err(CliError::Usage(format!("{where_}: expected `key = value`")))
                    }
                    Some(Ok((k, v))) => {
                        if !known(&k) {
                            return Err(CliError::Usage(format!(
                                "{where_}: unknown key `{k}` for `{command}`"
                            )));
                        }
                        values.insert(k, v);
                    }
                }
            }
        }
        for o in overrides {
            match parse_line(o) {
                Some(Ok((k, v))) if known(&k) => {
                    values.insert(k, v);
                }
                Some(Ok((k, _))) => {
                    return Err(CliError::Usage(format!(
                        "unknown key `{k}` for `{command}`"
                    )))
                }
                _ => {
                    return Err(CliError::Usage(format!(
                        "override `{o}` is not `key=value`"
                    )))
                }
            }
        }
        Ok(Self { command, values })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Parsed value of an optional key.
    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None | Some("") => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    /// Parsed value of a key that must be present.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key)?
            .ok_or_else(|| CliError::Usage(format!("`{}` needs the key `{key}`", self.command)))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        self.get(key)
    }

    /// Comma-separated list; empty when unset.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// The resolved configuration in the input format, so it can be passed
    /// back with `--config`.
    pub fn snapshot(&self) -> String {
        let mut s = format!("# resolved configuration for `{}`\n", self.command);
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
