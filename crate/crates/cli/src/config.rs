//! `key = value` run configuration shared by the config file, the flags and
//! the `run.cfg` sidecar.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use topolearn::fixtures::{make_fixture, Fixture};
use topolearn::graph::symmetric_coupling;
use topolearn::model::{ModelFamily, NodeParams};
use topolearn::noise::{NoiseKind, NoiseSpec};
use topolearn::{Error, PhysicalModelSpec, Result};

/// Keys describing a custom network instead of a named fixture.
pub const MODEL_KEYS: &[&str] = &[
    "family",
    "coupling",
    "anchor",
    "capacitance",
    "inertia",
    "damping",
    "dt",
    "noise",
    "noise-variance",
    "noise-ar",
];

/// Settings in key order, as read from a file and overridden by flags.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: k + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(parse_err("empty key".into()));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(parse_err(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn set_default(&mut self, key: &str, value: impl Into<String>) {
        self.values.entry(key.to_string()).or_insert_with(|| value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Rejects every key outside `allowed`.
    pub fn restrict(&self, command: &str, allowed: &[&str]) -> Result<()> {
        match self.values.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Invalid(format!("key `{k}` is not accepted by `{command}`"))),
            None => Ok(()),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Invalid(format!("missing required key `{key}`")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Invalid(format!("bad value `{v}` for `{key}`"))))
            .transpose()
    }

    pub fn float(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_float(key, v)).transpose()
    }

    pub fn count(&self, key: &str) -> Result<Option<usize>> {
        self.get(key).map(|v| parse_count(key, v)).transpose()
    }

    pub fn counts(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key).map(|v| split_list(v).map(|s| parse_count(key, s)).collect()).transpose()
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None | Some("false") => Ok(false),
            Some("true") => Ok(true),
            Some(v) => Err(Error::Invalid(format!("`{key}` must be true or false, got `{v}`"))),
        }
    }

    /// One `key = value` line per setting.
    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// A float, optionally with a `pi` suffix (`0.2pi`).
pub fn parse_float(key: &str, v: &str) -> Result<f64> {
    let bad = || Error::Invalid(format!("bad number `{v}` for `{key}`"));
    let x = match v.strip_suffix("pi") {
        Some("") => PI,
        Some(m) => m.trim().trim_end_matches('*').parse::<f64>().map_err(|_| bad())? * PI,
        None => v.parse::<f64>().map_err(|_| bad())?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

/// A nonnegative integer, also written as `1e6`.
pub fn parse_count(key: &str, v: &str) -> Result<usize> {
    let bad = || Error::Invalid(format!("bad count `{v}` for `{key}`"));
    if let Ok(n) = v.parse::<usize>() {
        return Ok(n);
    }
    let x = v.parse::<f64>().map_err(|_| bad())?;
    if x >= 0.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(bad())
    }
}

fn float_list(key: &str, v: &str) -> Result<Vec<f64>> {
    split_list(v).map(|s| parse_float(key, s)).collect()
}

/// A list of `n` values; a single value is repeated.
fn per_node(s: &Settings, key: &str, n: usize, default: Option<f64>) -> Result<Vec<f64>> {
    let values = match (s.get(key), default) {
        (Some(v), _) => float_list(key, v)?,
        (None, Some(d)) => vec![d],
        (None, None) => return Err(Error::Invalid(format!("missing required key `{key}`"))),
    };
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        l if l == n => Ok(values),
        l => Err(Error::Invalid(format!("`{key}` has {l} values for {n} nodes"))),
    }
}

/// Coupling rows separated by `;`, entries by `,` or whitespace.
fn coupling(v: &str) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = v
        .split(';')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| {
            r.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|x| !x.is_empty())
                .map(|x| parse_float("coupling", x))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Invalid("`coupling` must be a square matrix, rows separated by `;`".into()));
    }
    for i in 0..n {
        if rows[i][i] != 0.0 {
            return Err(Error::Invalid(format!("`coupling` has a nonzero diagonal entry at node {}", i + 1)));
        }
        for j in 0..i {
            if rows[i][j] != rows[j][i] {
                return Err(Error::Invalid(format!("`coupling` is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    Ok(rows)
}

/// The network named by `fixture`, or assembled from the model keys.
pub fn resolve_fixture(s: &Settings, seed: u64) -> Result<Fixture> {
    let custom = MODEL_KEYS.iter().any(|k| s.has(k));
    match (s.get("fixture"), custom) {
        (Some(_), true) => Err(Error::Invalid("give either `fixture` or a custom model, not both".into())),
        (Some(name), false) => {
            let mut f = make_fixture(name)?;
            f.noise.seed = seed;
            Ok(f)
        }
        (None, true) => custom_fixture(s, seed),
        (None, false) => Err(Error::Invalid("no network: set `fixture` or the custom model keys".into())),
    }
}

fn custom_fixture(s: &Settings, seed: u64) -> Result<Fixture> {
    let family = ModelFamily::parse(s.require("family")?)?;
    let rows = coupling(s.require("coupling")?)?;
    let n = rows.len();
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i < j)
        .map(|(i, j)| (i, j, rows[i][j]))
        .collect();
    let params = match family {
        ModelFamily::Consensus => NodeParams::Consensus,
        ModelFamily::RcThermal => NodeParams::RcThermal { capacitance: per_node(s, "capacitance", n, None)? },
        ModelFamily::Swing => NodeParams::Swing {
            inertia: per_node(s, "inertia", n, None)?,
            damping: per_node(s, "damping", n, None)?,
        },
    };
    for key in ["capacitance", "inertia", "damping"] {
        let used = matches!(
            (key, family),
            ("capacitance", ModelFamily::RcThermal) | ("inertia" | "damping", ModelFamily::Swing)
        );
        if s.has(key) && !used {
            return Err(Error::Invalid(format!("`{key}` does not apply to family `{}`", family.name())));
        }
    }
    let spec = PhysicalModelSpec { coupling: symmetric_coupling(n, &edges), anchor: per_node(s, "anchor", n, None)?, params };
    let dt = s.float("dt")?.ok_or_else(|| Error::Invalid("missing required key `dt`".into()))?;
    let kind = NoiseKind::parse(s.get("noise").unwrap_or("white"))?;
    let variance = per_node(s, "noise-variance", n, Some(1.0))?;
    let ar = match kind {
        NoiseKind::White => {
            if s.has("noise-ar") {
                return Err(Error::Invalid("`noise-ar` needs `noise = ar1`".into()));
            }
            vec![0.0; n]
        }
        NoiseKind::Ar1 => per_node(s, "noise-ar", n, None)?,
    };
    let noise = NoiseSpec { kind, variance, ar, seed };
    Fixture::new("custom", spec, noise, dt, "custom model from configuration")
}
