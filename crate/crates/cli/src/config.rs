//! Training configuration from defaults, a `key = value` file and flags.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use coba::TrainConfig;

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Plain-text `key = value` file; flags take precedence over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Embedding width per side.
    #[arg(long, visible_alias = "d")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    /// Neighbors sampled per node, side and layer.
    #[arg(long = "neighbor-k", visible_alias = "k")]
    pub neighbor_k: Option<usize>,
    /// Training negatives per node and direction.
    #[arg(long = "neg-per-node", visible_alias = "n")]
    pub neg_per_node: Option<usize>,
    #[arg(long = "learning-rate", visible_alias = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// full, no-reverse or no-reverse-no-collab.
    #[arg(long)]
    pub mode: Option<String>,
    /// relu, tanh, sigmoid or identity.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long = "weight-decay")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long = "freeze-tables", num_args = 0..=1, default_missing_value = "true")]
    pub freeze_tables: Option<bool>,
    #[arg(long = "project-features", num_args = 0..=1, default_missing_value = "true")]
    pub project_features: Option<bool>,
    /// Score with the source embedding on both sides (direction-blind control).
    #[arg(long = "tie-embeddings", num_args = 0..=1, default_missing_value = "true")]
    pub tie_embeddings: Option<bool>,
    /// Any config key, applied after the named flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn flag_values(&self) -> Vec<(&'static str, String)> {
        fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        push(&mut out, "dim", &self.dim);
        push(&mut out, "epochs", &self.epochs);
        push(&mut out, "layers", &self.layers);
        push(&mut out, "neighbor_k", &self.neighbor_k);
        push(&mut out, "neg_per_node", &self.neg_per_node);
        push(&mut out, "learning_rate", &self.learning_rate);
        push(&mut out, "batch_size", &self.batch_size);
        push(&mut out, "seed", &self.seed);
        push(&mut out, "mode", &self.mode);
        push(&mut out, "activation", &self.activation);
        push(&mut out, "weight_decay", &self.weight_decay);
        push(&mut out, "dropout", &self.dropout);
        push(&mut out, "freeze_tables", &self.freeze_tables);
        push(&mut out, "project_features", &self.project_features);
        push(&mut out, "tie_embeddings", &self.tie_embeddings);
        out
    }

    /// Defaults, then the config file, then flags, then `--set` pairs.
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_key_values(&text)
                .with_context(|| format!("in config file {}", path.display()))?;
        }
        for (key, value) in self.flag_values() {
            cfg.set(key, &value).with_context(|| format!("flag --{key}"))?;
        }
        for pair in &self.overrides {
            let (key, value) = pair
                .split_once('=')
                .with_context(|| format!("--set expects KEY=VALUE, got {pair:?}"))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
