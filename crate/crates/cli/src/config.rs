//! Layered settings: defaults, then the TOML config file, then `RIDEPOOL_*`
//! environment variables, then command-line overrides.
//!
//! Top-level keys are [`SimConfig`] fields verbatim; `[train]` and
//! `[calibration]` tables hold the training and search settings. In the
//! environment a double underscore separates the table from the key, so
//! `RIDEPOOL_FLEET_SIZE=30` and `RIDEPOOL_TRAIN__EPISODES=5` both work. The
//! string `none` clears an optional field.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ridepool::calibration::CalibrationConfig;
use ridepool::simulator::SimConfig;
use ridepool::value_fn::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const ENV_PREFIX: &str = "RIDEPOOL_";
/// Environment variables read by the argument parser instead.
const RESERVED: [&str; 2] = ["WORKDIR", "THREADS"];
const SECTIONS: [&str; 2] = ["train", "calibration"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub calibration: CalibrationConfig,
}

#[derive(Debug, Default)]
pub struct Layers {
    table: Map<String, Value>,
}

/// Parses `raw` as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    if raw.eq_ignore_ascii_case("none") {
        return Value::Null;
    }
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key present")).unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn nullify(v: &mut Value) {
    match v {
        Value::String(s) if s.eq_ignore_ascii_case("none") => *v = Value::Null,
        Value::Object(m) => m.values_mut().for_each(nullify),
        _ => {}
    }
}

impl Layers {
    pub fn from_file(path: Option<&Path>) -> Result<Layers> {
        let Some(path) = path else {
            return Ok(Layers::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let table: toml::Table = toml::from_str(&text).with_context(|| format!("malformed config {}", path.display()))?;
        let mut value = serde_json::to_value(table)?;
        nullify(&mut value);
        let Value::Object(table) = value else { unreachable!("a TOML document is a table") };
        Ok(Layers { table })
    }

    /// Sets a dotted key (`fleet_size`, `train.episodes`).
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let key = key.trim();
        let (section, field) = match key.split_once('.') {
            Some((s, f)) if SECTIONS.contains(&s) => (Some(s), f),
            Some(_) => bail!("unknown config table in `{key}`"),
            None => (None, key),
        };
        if field.is_empty() || SECTIONS.contains(&field) {
            bail!("`{key}` is not a settable key");
        }
        let target = match section {
            None => &mut self.table,
            Some(s) => match self.table.entry(s).or_insert_with(|| Value::Object(Map::new())) {
                Value::Object(m) => m,
                _ => bail!("`{s}` in the config file must be a table"),
            },
        };
        target.insert(field.to_string(), parse_value(raw));
        Ok(())
    }

    /// `KEY=VALUE` form of [`Layers::set`].
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair.split_once('=').with_context(|| format!("expected KEY=VALUE, got `{pair}`"))?;
        self.set(k, v)
    }

    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (k, v) in vars {
            let suffix = &k[ENV_PREFIX.len()..];
            if RESERVED.contains(&suffix) {
                continue;
            }
            let key = suffix.to_ascii_lowercase().replacen("__", ".", 1);
            self.set(&key, &v).with_context(|| format!("environment variable {k}"))?;
        }
        Ok(())
    }

    /// Whether any layer set this top-level key.
    pub fn is_set(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    pub fn resolve(&self) -> Result<Settings> {
        let mut sim = self.table.clone();
        let mut take = |name: &str| sim.remove(name).unwrap_or_else(|| Value::Object(Map::new()));
        let train = take("train");
        let calibration = take("calibration");
        let settings = Settings {
            sim: serde_json::from_value(Value::Object(sim)).context("invalid simulation settings")?,
            train: serde_json::from_value(train).context("invalid [train] settings")?,
            calibration: serde_json::from_value(calibration).context("invalid [calibration] settings")?,
        };
        settings.sim.validate()?;
        Ok(settings)
    }
}
