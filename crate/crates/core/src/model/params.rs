use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureTable;
use crate::rng;

/// Which aggregation refinements are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// Bi-aggregation, reverse fallback and collaborative cross-terms.
    Full,
    /// No reverse fallback (COBA-Re).
    NoReverse,
    /// Neither reverse fallback nor cross-terms (COBA-Re-Co).
    NoReverseNoCollab,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [
        AggregationMode::Full,
        AggregationMode::NoReverse,
        AggregationMode::NoReverseNoCollab,
    ];

    pub fn reverse(self) -> bool {
        matches!(self, AggregationMode::Full)
    }

    pub fn collaborative(self) -> bool {
        !matches!(self, AggregationMode::NoReverseNoCollab)
    }

    /// Number of `d`-wide blocks in a layer input.
    pub fn input_blocks(self) -> usize {
        if self.collaborative() {
            3
        } else {
            2
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Full => "full",
            AggregationMode::NoReverse => "no-reverse",
            AggregationMode::NoReverseNoCollab => "no-reverse-no-collab",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "coba" => Ok(AggregationMode::Full),
            "no-reverse" | "coba-re" => Ok(AggregationMode::NoReverse),
            "no-reverse-no-collab" | "coba-re-co" => Ok(AggregationMode::NoReverseNoCollab),
            other => Err(Error::InvalidArgument(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
            Activation::Sigmoid => super::sigmoid(x),
        }
    }

    /// Derivative at pre-activation `x` with output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" | "none" => Ok(Activation::Identity),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Weights of one layer, each `(blocks * d) x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ws: Array2<f64>,
    pub wt: Array2<f64>,
}

/// All learnable state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Layer-0 source table.
    pub source0: Array2<f64>,
    /// Layer-0 target table.
    pub target0: Array2<f64>,
    pub layers: Vec<LayerWeights>,
    pub activation: Activation,
    pub mode: AggregationMode,
    /// Layer-0 tables are excluded from optimization.
    pub tables_frozen: bool,
}

impl ModelParams {
    pub fn num_nodes(&self) -> usize {
        self.source0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.source0.ncols()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn weight_parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.ws.len() + l.wt.len()).sum()
    }

    pub fn trainable_parameter_count(&self) -> usize {
        let tables = if self.tables_frozen {
            0
        } else {
            self.source0.len() + self.target0.len()
        };
        tables + self.weight_parameter_count()
    }

    /// Shape and finiteness check.
    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.source0.dim();
        if d == 0 {
            return Err(Error::Dimension("embedding dimension is zero".into()));
        }
        if self.target0.dim() != (n, d) {
            return Err(Error::Dimension(format!(
                "target table {:?} vs source table {:?}",
                self.target0.dim(),
                (n, d)
            )));
        }
        let want = (self.mode.input_blocks() * d, d);
        for (i, l) in self.layers.iter().enumerate() {
            if l.ws.dim() != want || l.wt.dim() != want {
                return Err(Error::Dimension(format!(
                    "layer {i}: weights {:?}/{:?}, mode {} needs {want:?}",
                    l.ws.dim(),
                    l.wt.dim(),
                    self.mode
                )));
            }
        }
        let finite = |a: &Array2<f64>| a.iter().all(|x| x.is_finite());
        if !finite(&self.source0)
            || !finite(&self.target0)
            || !self.layers.iter().all(|l| finite(&l.ws) && finite(&l.wt))
        {
            return Err(Error::Dimension("non-finite parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_nodes: usize,
    pub dim: usize,
    pub layers: usize,
    pub mode: AggregationMode,
    pub activation: Activation,
    /// Map features of width `F != d` through a fixed random projection.
    pub project_features: bool,
    pub freeze_tables: bool,
}

fn xavier(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut rng::Rng) -> Array2<f64> {
    let bound = xavier_bound(fan_in, fan_out);
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Initializes parameters. With a feature table both layer-0 tables start as
/// the (optionally projected) features; otherwise they are Xavier-uniform over
/// `(N, d)`. Weights are Xavier-uniform over `(blocks * d, d)`.
pub fn init_model(cfg: &ModelConfig, features: Option<&FeatureTable>, seed: u64) -> Result<ModelParams> {
    if cfg.dim == 0 || cfg.layers == 0 {
        return Err(Error::InvalidArgument("dim and layers must be at least 1".into()));
    }
    let (n, d) = (cfg.num_nodes, cfg.dim);
    let mut table_rng = rng::stream(seed, "init/tables");
    let (source0, target0) = match features {
        Some(f) => {
            if f.rows != n {
                return Err(Error::Dimension(format!("feature table has {} rows, graph has {n} nodes", f.rows)));
            }
            let x = Array2::from_shape_vec((n, f.cols), f.data.clone())
                .map_err(|e| Error::Dimension(e.to_string()))?;
            let table = if f.cols == d {
                x
            } else if cfg.project_features {
                let proj = xavier(f.cols, d, f.cols, d, &mut table_rng);
                x.dot(&proj)
            } else {
                return Err(Error::Dimension(format!(
                    "feature width {} differs from dim {d} and projection is disabled",
                    f.cols
                )));
            };
            (table.clone(), table)
        }
        None => {
            let s = xavier(n, d, n, d, &mut table_rng);
            let t = xavier(n, d, n, d, &mut table_rng);
            (s, t)
        }
    };
    let mut w_rng = rng::stream(seed, "init/weights");
    let fan_in = cfg.mode.input_blocks() * d;
    let layers = (0..cfg.layers)
        .map(|_| LayerWeights {
            ws: xavier(fan_in, d, fan_in, d, &mut w_rng),
            wt: xavier(fan_in, d, fan_in, d, &mut w_rng),
        })
        .collect();
    Ok(ModelParams {
        source0,
        target0,
        layers,
        activation: cfg.activation,
        mode: cfg.mode,
        tables_frozen: cfg.freeze_tables,
    })
}
