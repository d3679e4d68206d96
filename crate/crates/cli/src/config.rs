use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use urnflow::model::{ensure_valid, ModelFile, ModelSpec, PresetName};

/// Bad configuration or arguments; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelFile,
    pub n_list: Vec<usize>,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Snapshot times; empty means eleven evenly spaced times on `[0, T]`.
    pub times: Vec<f64>,
    pub grid: usize,
    pub dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub test_functions: Vec<String>,
    pub binary_test_functions: Vec<String>,
    pub out: PathBuf,
    /// Acceptance criteria run by `verify`; empty means all.
    pub checks: Vec<u8>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelFile {
                preset: Some(PresetName::Voter),
                lambda: Some("1".into()),
                phi: Some("0.5".into()),
                ..ModelFile::default()
            },
            n_list: vec![64],
            horizon: 1.0,
            times: Vec::new(),
            grid: 256,
            dt: 1e-3,
            replicas: 100,
            seed: 0,
            test_functions: vec!["1".into(), "u".into(), "u*u".into()],
            binary_test_functions: vec!["u*v".into()],
            out: PathBuf::from("urnflow-out"),
            checks: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| bad(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies `key=value` overrides. Keys name top-level fields (`T`,
    /// `n_list`, ...) or model fields (`model.phi`). Values are read as JSON
    /// when they parse, except that string fields take the text verbatim and
    /// list fields also accept comma-separated items.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> anyhow::Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("override `{item}` is not KEY=VALUE")))?;
            let (key, raw) = (key.trim(), raw.trim());
            let slot = match key.split_once('.') {
                Some(("model", field)) => {
                    if !MODEL_FIELDS.contains(&field) {
                        return Err(bad(format!("unknown model field `{field}`")));
                    }
                    &mut doc["model"][field]
                }
                Some(_) => return Err(bad(format!("unknown override key `{key}`"))),
                None => doc
                    .get_mut(key)
                    .ok_or_else(|| bad(format!("unknown override key `{key}`")))?,
            };
            *slot = override_value(key, slot, raw);
        }
        *self = serde_json::from_value(doc).map_err(|e| bad(format!("override: {e}")))?;
        Ok(())
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.times.is_empty() {
            (0..=10).map(|k| self.horizon * k as f64 / 10.0).collect()
        } else {
            self.times.clone()
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(bad(format!("T must be positive, got {}", self.horizon)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(bad(format!("dt must be positive, got {}", self.dt)));
        }
        if self.grid == 0 {
            return Err(bad("grid must be positive"));
        }
        if self.replicas == 0 {
            return Err(bad("replicas must be positive"));
        }
        if self.n_list.is_empty() {
            return Err(bad("n_list is empty"));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(bad(format!("n_list entries must be at least 2, got {n}")));
        }
        if let Some(t) = self
            .times
            .iter()
            .find(|&&t| !(0.0..=self.horizon).contains(&t))
        {
            return Err(bad(format!(
                "snapshot time {t} is outside [0, {}]",
                self.horizon
            )));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(bad("snapshot times must be nondecreasing"));
        }
        Ok(())
    }

    /// Resolves and validates the model.
    pub fn model_spec(&self) -> anyhow::Result<ModelSpec> {
        let spec = ModelSpec::from_file(&self.model).map_err(|e| bad(e.to_string()))?;
        ensure_valid(&spec).map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }
}

const MODEL_FIELDS: [&str; 9] = ["preset", "b", "c", "lambda", "a1", "a2", "a3", "a4", "phi"];

fn override_value(key: &str, current: &Value, raw: &str) -> Value {
    if key.starts_with("model.") {
        return Value::String(raw.to_string());
    }
    match current {
        Value::String(_) => Value::String(raw.to_string()),
        Value::Array(_) => match serde_json::from_str::<Value>(raw) {
            Ok(v @ Value::Array(_)) => v,
            _ => Value::Array(
                raw.split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| scalar(s.trim()))
                    .collect(),
            ),
        },
        _ => scalar(raw),
    }
}

fn scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}
