//! Flat `key=value` configuration files whose entries are overridden by flags.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "d",
    "n",
    "noise",
    "seed",
    "out",
    "method",
    "source",
    "target",
    "matches",
    "transported",
    "s",
    "epsilon",
    "eta",
    "omega",
    "cost",
    "init",
    "folds",
    "k",
    "train_fraction",
    "me_outer",
    "fit_steps",
    "ot_steps",
    "lr",
    "sinkhorn_iters",
    "sinkhorn_tol",
    "svg",
];

#[derive(Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected key=value",
                    no + 1
                )));
            };
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!(
                    "config line {}: unknown key '{key}'",
                    no + 1
                )));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The flag if given, else the config entry, else nothing.
    pub fn lookup<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.entries.get(key) {
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                CliError::Usage(format!("config key '{key}': invalid value '{raw}': {e}"))
            }),
            None => Ok(None),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.lookup(key, flag)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.lookup(key, flag)?.ok_or_else(|| {
            CliError::Usage(format!(
                "missing required option --{}",
                key.replace('_', "-")
            ))
        })
    }
}

/// Accepts `inf` besides ordinary decimals.
pub fn parse_eta(raw: &str) -> Result<f64, String> {
    let v: f64 = match raw.trim() {
        "inf" | "infinity" => f64::INFINITY,
        other => other.parse().map_err(|e| format!("{e}"))?,
    };
    if v >= 0.0 {
        Ok(v)
    } else {
        Err("eta must be nonnegative".into())
    }
}
