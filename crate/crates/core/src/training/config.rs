use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Activation, AggregationMode, ModelConfig};

use super::AdamConfig;

/// Every hyperparameter and seed of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Embedding width per side.
    pub dim: usize,
    pub epochs: usize,
    pub layers: usize,
    /// Neighbors sampled per node and side, per layer.
    pub neighbor_k: usize,
    /// Training negatives per node and direction.
    pub neg_per_node: usize,
    pub learning_rate: f64,
    /// Positive edges per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub mode: AggregationMode,
    pub activation: Activation,
    pub weight_decay: f64,
    pub dropout: f64,
    pub freeze_tables: bool,
    pub project_features: bool,
    /// Score edges with `s_u . s_v` (direction-blind control).
    pub tie_embeddings: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            epochs: 40,
            layers: 1,
            neighbor_k: 2,
            neg_per_node: 2,
            learning_rate: 1e-3,
            batch_size: 1024,
            seed: 0,
            mode: AggregationMode::Full,
            activation: Activation::Relu,
            weight_decay: 0.0,
            dropout: 0.0,
            freeze_tables: false,
            project_features: false,
            tie_embeddings: false,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 15] = [
        "dim",
        "epochs",
        "layers",
        "neighbor_k",
        "neg_per_node",
        "learning_rate",
        "batch_size",
        "seed",
        "mode",
        "activation",
        "weight_decay",
        "dropout",
        "freeze_tables",
        "project_features",
        "tie_embeddings",
    ];

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("layers", self.layers),
            ("neighbor_k", self.neighbor_k),
            ("neg_per_node", self.neg_per_node),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("weight_decay must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Sets one field from its textual form (config files and overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
        }
        match key {
            "dim" | "d" => self.dim = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "neighbor_k" | "k" => self.neighbor_k = parse(key, value)?,
            "neg_per_node" | "n" => self.neg_per_node = parse(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "activation" => self.activation = value.parse()?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "freeze_tables" => self.freeze_tables = parse(key, value)?,
            "project_features" => self.project_features = parse(key, value)?,
            "tie_embeddings" => self.tie_embeddings = parse(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_key_values(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        Self::KEYS
            .iter()
            .map(|k| {
                let field = &v[*k];
                let text = field.as_str().map(str::to_owned).unwrap_or_else(|| field.to_string());
                format!("{k} = {text}\n")
            })
            .collect()
    }

    pub fn model_config(&self, num_nodes: usize) -> ModelConfig {
        ModelConfig {
            num_nodes,
            dim: self.dim,
            layers: self.layers,
            mode: self.mode,
            activation: self.activation,
            project_features: self.project_features,
            freeze_tables: self.freeze_tables,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}
