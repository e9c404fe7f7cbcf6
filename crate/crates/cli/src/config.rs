//! Run configuration: a flat map of string keys assembled from an optional
//! config file and then from command-line flags, which win.
//!
//! Config files are either plain text
//!
//! ```text
//! # comment
//! offspring = geometric:p=0.75
//! alpha = 0.6667
//! ```
//!
//! or a JSON sidecar written by an earlier run, whose `config` object is
//! read back verbatim.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};

/// Keys accepted in config files.
pub const KNOWN_KEYS: &[&str] = &[
    "offspring",
    "alpha",
    "method",
    "count",
    "seed",
    "workers",
    "t_grid",
    "s_grid",
    "format",
    "output",
    "id",
    "n",
    "rho",
    "p",
    "kind",
    "pool_size",
    "iterations",
];

/// Bad flags, keys or values. Maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn normalise_key(k: &str) -> String {
    k.trim().replace('-', "_").to_ascii_lowercase()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let cfg = if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_key_values(&text)
        };
        cfg.with_context(|| format!("in config file {}", path.display()))
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value, got '{line}'", i + 1)))?;
            cfg.set_checked(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| usage(format!("invalid JSON: {e}")))?;
        let map = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| usage("JSON config needs a \"config\" object"))?;
        let mut cfg = RunConfig::default();
        for (k, v) in map {
            let v = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            cfg.set_checked(k, &v)?;
        }
        Ok(cfg)
    }

    fn set_checked(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalise_key(key);
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("unknown config key '{key}'")));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    /// Sets `key` when `value` is present, overriding any earlier value.
    pub fn apply<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(normalise_key(key), v.to_string());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("cannot parse {key} = '{s}'"))),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| usage(format!("missing required setting '{key}' (flag --{})", key.replace('_', "-"))))
    }

    pub fn get_or<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.values.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    /// The resolved settings, for the metadata sidecar.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.values
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
                .collect(),
        )
    }
}

/// Parses `min:max:points[:log|:linear]` into grid points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if !(parts.len() == 3 || parts.len() == 4) {
        return Err(usage(format!("grid '{spec}': expected min:max:points[:log|:linear]")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| usage(format!("grid '{spec}': '{s}' is not a number")))
    };
    let (lo, hi) = (num(parts[0])?, num(parts[1])?);
    let points: usize = parts[2]
        .parse()
        .map_err(|_| usage(format!("grid '{spec}': '{}' is not a point count", parts[2])))?;
    let log = match parts.get(3).copied() {
        None | Some("linear") | Some("lin") => false,
        Some("log") => true,
        Some(other) => return Err(usage(format!("grid '{spec}': unknown spacing '{other}'"))),
    };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
        return Err(usage(format!("grid '{spec}': need 0 ≤ min ≤ max")));
    }
    if points == 0 {
        return Err(usage(format!("grid '{spec}': need at least one point")));
    }
    if log && lo <= 0.0 {
        return Err(usage(format!("grid '{spec}': log spacing needs min > 0")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|i| {
            let f = i as f64 / last;
            if log {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect())
}

/// Text form of the default grid: 0 plus 50 log points in [0.01, 20].
pub const DEFAULT_T_GRID: &str = "default";

pub fn resolve_grid(spec: &str) -> Result<Vec<f64>> {
    if spec == DEFAULT_T_GRID {
        Ok(smoothfix::verify::default_grid())
    } else {
        parse_grid(spec)
    }
}
