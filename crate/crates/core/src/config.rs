//! Scenario configuration loading: defaults ← JSON file ← `key=value`
//! overrides, then validation.

use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::error::ValidationError;
use crate::sim::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{origin}: invalid JSON: {message}")]
    Parse { origin: String, message: String },
    #[error("{0}: unknown key")]
    UnknownKey(String),
    #[error("{path}: expected {expected}")]
    Type { path: String, expected: &'static str },
    #[error("override {0:?}: expected KEY=VALUE")]
    Override(String),
    #[error("{0}")]
    Invalid(#[from] ValidationError),
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() { key.to_string() } else { format!("{prefix}.{key}") }
}

/// Merges `patch` into `base`, which must already hold every allowed key.
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), ConfigError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = join(path, &k);
                let slot = b.get_mut(&k).ok_or_else(|| ConfigError::UnknownKey(sub.clone()))?;
                merge(slot, v, &sub)?;
            }
            Ok(())
        }
        (Value::Array(b), Value::Array(p)) => {
            if b.len() != p.len() {
                return Err(ConfigError::Type { path: path.into(), expected: "an array of the default length" });
            }
            for (i, (slot, v)) in b.iter_mut().zip(p).enumerate() {
                merge(slot, v, &join(path, &i.to_string()))?;
            }
            Ok(())
        }
        (b, p) if std::mem::discriminant(b) == std::mem::discriminant(&p) => {
            *b = p;
            Ok(())
        }
        (b, _) => Err(ConfigError::Type { path: path.into(), expected: kind(b) }),
    }
}

/// Sets one dotted key. Array elements are addressed by index
/// (`pid.kp.0=100`). Values parse as JSON, falling back to a bare string.
fn apply_override(root: &mut Value, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(item.into()));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut slot = &mut *root;
    let mut walked = String::new();
    for part in key.split('.') {
        walked = join(&walked, part);
        slot = match slot {
            Value::Object(m) => m.get_mut(part),
            Value::Array(a) => part.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| ConfigError::UnknownKey(walked.clone()))?;
    }
    merge(slot, value, key)
}

/// Defaults, then the JSON document `text`, then `overrides`; validated.
pub fn config_from_str(text: &str, origin: &str, overrides: &[String]) -> Result<ScenarioConfig<f64>, ConfigError> {
    let mut root = serde_json::to_value(ScenarioConfig::<f64>::default()).expect("defaults serialize");
    if !text.trim().is_empty() {
        let file: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.into(), message: e.to_string() })?;
        if !file.is_object() {
            return Err(ConfigError::Type { path: origin.into(), expected: "a JSON object" });
        }
        merge(&mut root, file, "")?;
    }
    finish(root, origin, overrides)
}

fn finish(mut root: Value, origin: &str, overrides: &[String]) -> Result<ScenarioConfig<f64>, ConfigError> {
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let config: ScenarioConfig<f64> =
        serde_json::from_value(root).map_err(|e| ConfigError::Parse { origin: origin.into(), message: e.to_string() })?;
    config.validate()?;
    Ok(config)
}

/// `config` with further `key=value` overrides applied, revalidated.
pub fn apply_overrides(config: &ScenarioConfig<f64>, overrides: &[String]) -> Result<ScenarioConfig<f64>, ConfigError> {
    finish(serde_json::to_value(config).expect("config serializes"), "overrides", overrides)
}

/// Loads a scenario config. `None` starts from the defaults alone.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig<f64>, ConfigError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
            config_from_str(&text, &p.display().to_string(), overrides)
        }
        None => config_from_str("", "defaults", overrides),
    }
}
