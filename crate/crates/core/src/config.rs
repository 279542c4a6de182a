//! Pipeline configuration: one TOML table per module, every key optional.
//!
//! ```toml
//! [context_builder]
//! history = 15
//! future = 30
//!
//! [style_model]
//! lr = 0.01
//! ```

use serde::{Deserialize, Serialize};

use crate::context::{LaneGeometry, WindowConfig};
use crate::eval::ScoringGeometry;
use crate::model::{ModelConfig, TrainConfig};
use crate::rollout::RolloutSettings;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error at `{path}`: {message}")]
    Key { path: String, message: String },
}

fn key(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseSection {
    pub rate: f64,
}

impl Default for PoseSection {
    fn default() -> Self {
        PoseSection {
            rate: crate::pose::DEFAULT_RATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextSection {
    pub history: usize,
    pub future: usize,
    pub n: usize,
    pub horizon: f64,
    pub n_ref: usize,
    /// Frames between consecutive training windows.
    pub stride: usize,
    pub geometry: LaneGeometry,
}

impl Default for ContextSection {
    fn default() -> Self {
        let w = WindowConfig::default();
        ContextSection {
            history: w.history,
            future: w.future,
            n: w.n,
            horizon: w.horizon,
            n_ref: w.n_ref,
            stride: 1,
            geometry: LaneGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StyleSection {
    pub d_z: usize,
    pub hidden: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lambda_match: f64,
    pub parallel: bool,
}

impl Default for StyleSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        StyleSection {
            d_z: m.d_z,
            hidden: m.hidden,
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            momentum: t.momentum,
            lambda_match: t.lambda_match,
            parallel: t.parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliSection {
    pub seed: u64,
    pub threads: usize,
}

impl Default for CliSection {
    fn default() -> Self {
        CliSection {
            seed: 42,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub pose_core: PoseSection,
    pub context_builder: ContextSection,
    pub style_model: StyleSection,
    pub rollout: RolloutSettings,
    pub eval_suite: ScoringGeometry,
    pub cli_app: CliSection,
}

/// Parses a `--set` value as a TOML value, falling back to a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `dotted.key = value` inside `table`, creating tables on the way.
pub fn apply_override(table: &mut toml::Table, dotted: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(key(
            dotted,
            "override key must be a dotted path like `style_model.lr`",
        ));
    }
    let mut cur = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| key(parts[..=i].join("."), "is not a table"))?;
    }
    cur.insert(
        parts[parts.len() - 1].to_string(),
        parse_override_value(raw),
    );
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text, applies `overrides` (`dotted.key`, raw value) and
    /// validates.
    pub fn from_toml_str(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut table, k, v)?;
        }
        let cfg: PipelineConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| {
                let path = e.path().to_string();
                key(
                    if path == "." { String::new() } else { path },
                    e.into_inner().to_string(),
                )
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = self.window();
        w.validate().map_err(|(f, m)| {
            if f == "rate" {
                key("pose_core.rate", m)
            } else {
                key(format!("context_builder.{f}"), m)
            }
        })?;
        if self.context_builder.stride < 1 {
            return Err(key("context_builder.stride", "must be >= 1"));
        }
        self.context_builder
            .geometry
            .validate()
            .map_err(|m| key("context_builder.geometry", m))?;
        if self.style_model.d_z < 1 {
            return Err(key("style_model.d_z", "must be >= 1"));
        }
        if self.style_model.hidden < 1 {
            return Err(key("style_model.hidden", "must be >= 1"));
        }
        self.train()
            .validate()
            .map_err(|(f, m)| key(format!("style_model.{f}"), m))?;
        self.rollout.validate(w.future).map_err(|e| match e {
            crate::rollout::RolloutError::Config { field, message } => {
                key(format!("rollout.{field}"), message)
            }
            other => key("rollout", other.to_string()),
        })?;
        self.eval_suite.validate().map_err(|e| match e {
            crate::eval::EvalError::Config { field, message } => {
                key(format!("eval_suite.{field}"), message)
            }
            other => key("eval_suite", other.to_string()),
        })?;
        if self.cli_app.threads < 1 {
            return Err(key("cli_app.threads", "must be >= 1"));
        }
        Ok(())
    }

    pub fn window(&self) -> WindowConfig {
        let c = &self.context_builder;
        WindowConfig {
            history: c.history,
            future: c.future,
            n: c.n,
            horizon: c.horizon,
            n_ref: c.n_ref,
            rate: self.pose_core.rate,
        }
    }

    pub fn model(&self) -> ModelConfig {
        let c = &self.context_builder;
        ModelConfig {
            d_z: self.style_model.d_z,
            hidden: self.style_model.hidden,
            history: c.history,
            future: c.future,
            n: c.n,
            n_ref: c.n_ref,
        }
    }

    pub fn train(&self) -> TrainConfig {
        let s = &self.style_model;
        TrainConfig {
            steps: s.steps,
            batch_size: s.batch_size,
            lr: s.lr,
            momentum: s.momentum,
            lambda_match: s.lambda_match,
            parallel: s.parallel,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
