//! Run configuration: a sectioned TOML file plus `section.key=value` overrides.
//!
//! ```toml
//! [grid]
//! d = 2
//! n_transverse = 64
//! l_z = 100.0
//! n_z = 2048
//! dealias = true
//!
//! [time]
//! t_end = 500.0
//! dt = 0.01          # largest step
//! dt_min = 1e-5      # smallest step of the start-up ramp
//! dt_ramp = 1e-3     # step is clamp(dt_ramp * t, dt_min, dt)
//! stabilization = 2.0
//!
//! [init]
//! c0 = 0.5
//! epsilon = 0.05
//! shape = "transverse"   # none | transverse | odd | random
//! seed = 0
//!
//! [output]
//! record_stride = 48     # records per decade of t
//! record_t0 = 0.01       # first record time after t = 0
//! checkpoint_stride = 0  # records between checkpoints, 0 = only on abort
//! ```
//!
//! Every key is optional; missing keys take the values above.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_ramp: f64,
    pub stabilization: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t_end: 500.0,
            dt: 0.01,
            dt_min: 1e-5,
            dt_ramp: 1e-3,
            stabilization: 2.0,
        }
    }
}

/// Perturbation shape `p` of the initial datum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `p = 0`.
    None,
    /// `p = cos(2 pi x1) exp(-(z - 1)^2 / 2)`, zero transverse mean.
    Transverse,
    /// `p = (1 + cos(2 pi x1)) z exp(-z^2 / 2)`, odd in z.
    Odd,
    /// Seeded random smooth field with unit sup norm.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    pub c0: f64,
    pub epsilon: f64,
    pub shape: Shape,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            c0: 0.5,
            epsilon: 0.05,
            shape: Shape::Transverse,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub record_stride: usize,
    pub record_t0: f64,
    pub checkpoint_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            record_stride: 48,
            record_t0: 0.01,
            checkpoint_stride: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub time: TimeConfig,
    pub init: InitSpec,
    pub output: OutputConfig,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.time;
        check(t.t_end.is_finite() && t.t_end > 0.0, || format!("time.t_end = {} must be positive", t.t_end))?;
        check(t.dt.is_finite() && t.dt > 0.0, || format!("time.dt = {} must be positive", t.dt))?;
        check(t.dt_min > 0.0 && t.dt_min <= t.dt, || {
            format!("time.dt_min = {} must lie in (0, dt]", t.dt_min)
        })?;
        check(t.dt_ramp.is_finite() && t.dt_ramp >= 0.0, || {
            format!("time.dt_ramp = {} must be non-negative", t.dt_ramp)
        })?;
        check(t.stabilization >= 2.0, || {
            format!("time.stabilization = {} must be >= 2", t.stabilization)
        })?;
        let i = &self.init;
        check(i.c0.is_finite() && i.c0.abs() <= 0.25 * self.grid.l_z, || {
            format!("init.c0 = {} must satisfy |c0| <= l_z / 4", i.c0)
        })?;
        check((0.0..=0.1).contains(&i.epsilon), || {
            format!("init.epsilon = {} must lie in [0, 0.1]", i.epsilon)
        })?;
        let o = &self.output;
        check(o.record_stride >= 1, || "output.record_stride must be >= 1".into())?;
        check(o.record_t0 > 0.0 && o.record_t0.is_finite(), || {
            format!("output.record_t0 = {} must be positive", o.record_t0)
        })?;
        Ok(())
    }

    /// Parses a TOML document, applies `key=value` overrides and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<RunConfig> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("schema error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Git-style content hash: SHA-256 of `"blob <len>\0" + canonical TOML`.
    pub fn content_hash(&self) -> String {
        let body = self.to_toml();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Applies one `section.key=value` override to a parsed TOML table.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for p in &path[..path.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}
