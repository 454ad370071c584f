//! Flat `key=value` run configuration.
//!
//! Settings resolve through three layers: command-line flags override
//! config-file values, which override built-in defaults. The file is UTF-8
//! `key=value` lines with `#` comments; it comes from `--config`, falling
//! back to the `PROXKIT_CONFIG` environment variable, falling back to no
//! file at all.

use std::collections::HashMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Every key a config file may set.
pub const KNOWN_KEYS: [&str; 18] = [
    "sma.window",
    "kf.history",
    "pf.n_particles",
    "pf.process_sigma",
    "pf.meas_sigma",
    "pf.ess_threshold_fraction",
    "pf.seed",
    "ni.kde_sigma",
    "ni.process_noise",
    "sim.noise_sigma",
    "sim.outlier_prob",
    "sim.outlier_sigma",
    "sim.samples_per_distance",
    "sim.interval_ms",
    "sim.distances",
    "sim.beacon_id",
    "sim.seed",
    "eval.carry_state",
];

/// Parsed config-file contents; empty when no file was given.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: HashMap<&'static str, (usize, String)>,
}

impl FileConfig {
    /// Loads `explicit` when given, else the file named by `PROXKIT_CONFIG`,
    /// else returns an empty config.
    pub fn load(explicit: Option<&Path>) -> Result<Self> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os("PROXKIT_CONFIG").map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(&path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config file {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line}: expected `key=value`, got `{trimmed}`"))?;
            let key = key.trim();
            let known = KNOWN_KEYS
                .iter()
                .find(|k| **k == key)
                .ok_or_else(|| anyhow!("line {line}: unknown key `{key}`"))?;
            if values.insert(*known, (line, value.trim().to_string())).is_some() {
                bail!("line {line}: duplicate key `{key}`");
            }
        }
        Ok(Self { values })
    }

    /// The parsed value for `key`, or `None` when the file does not set it.
    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some((line, raw)) = self.values.get(key) else {
            return Ok(None);
        };
        raw.parse().map(Some).map_err(|e| {
            anyhow!("config line {line}: key `{key}`: cannot parse `{raw}`: {e}")
        })
    }
}

/// Flag value, else config value, else the built-in default. Config parse
/// errors surface even when a flag overrides them: a broken file is a
/// mistake worth hearing about.
pub fn resolve<T>(flag: Option<T>, file: &FileConfig, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: Display,
{
    Ok(flag.or(file.get(key)?).unwrap_or(default))
}
