//! Flat `key = value` config files and flag > file > default resolution.
//!
//! Keys are long flag names without the leading dashes (`min-df`, `cbow-lr`);
//! underscores are accepted in place of dashes. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// Every key any subcommand understands. A file may carry keys that the
/// current subcommand does not use; unknown keys are rejected.
pub const KNOWN_KEYS: &[&str] = &[
    "alpha",
    "all",
    "cbow-dim",
    "cbow-epochs",
    "cbow-lr",
    "cbow-min-count",
    "cbow-negatives",
    "cbow-window",
    "data-fake",
    "data-real",
    "dims",
    "fixture",
    "input",
    "iterations",
    "kernel",
    "learning-rate",
    "max-iter",
    "min-df",
    "model",
    "out",
    "perplexity",
    "progress-every",
    "r",
    "seed",
    "split-dir",
    "stopwords",
    "subsample",
    "test-fraction",
    "threads",
    "tolerance",
    "vectorizer",
];

#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config file {}: {e}", p.display()))
                })?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{origin}:{}: expected key = value", n + 1))
            })?;
            let key = key.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: unknown key '{key}'",
                    n + 1
                )));
            }
            if file.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!(
                    "{origin}:{}: duplicate key '{key}'",
                    n + 1
                )));
            }
        }
        Ok(Self {
            file,
            effective: BTreeMap::new(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key '{key}': {e}"))),
        }
    }

    /// Flag value, else file value, else `default`.
    pub fn value<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn optional<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
    ) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
        let v = flag.or_else(|| self.file.get(key).map(PathBuf::from));
        if let Some(p) = &v {
            self.effective
                .insert(key.to_string(), p.display().to_string());
        }
        Ok(v)
    }

    /// A switch is on when the flag is given or the file says `true`.
    pub fn switch(&mut self, key: &str, flag: bool) -> Result<bool, CliError> {
        let v = flag || self.file_value::<bool>(key)?.unwrap_or(false);
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// Records a value that was derived rather than read.
    pub fn record(&mut self, key: &str, value: impl Display) {
        self.effective.insert(key.to_string(), value.to_string());
    }

    /// The resolved settings in config-file syntax, sorted by key.
    pub fn render(&self) -> String {
        self.effective
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
