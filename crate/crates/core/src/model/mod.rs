//! Dual source/target embedding model.
//!
//! Each layer updates a node's source embedding from its own source and target
//! embeddings plus the mean source embedding of its sampled source neighbors,
//! and symmetrically for the target side. Zero in-degree (out-degree) nodes
//! borrow their missing neighborhood from the opposite direction.

mod engine;
mod neighborhood;
mod params;

pub use engine::{backward, forward, forward_rows, forward_rows_with_dropout, Dropout, ForwardCache, Gradients};
pub use neighborhood::{aggregate_mean, select_neighborhood, NeighborhoodRow, SampledNeighborhood};
pub use params::{init_model, xavier_bound, Activation, AggregationMode, LayerWeights, ModelConfig, ModelParams};

use ndarray::{Array2, ArrayView1};

/// Per-node source (`S`) and target (`T`) embeddings, both `N x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEmbedding {
    pub source: Array2<f64>,
    pub target: Array2<f64>,
}

impl DualEmbedding {
    pub fn num_nodes(&self) -> usize {
        self.source.nrows()
    }

    pub fn dim(&self) -> usize {
        self.source.ncols()
    }

    /// Raw decoder logit `s_u . t_v` for the edge `u -> v`.
    pub fn logit(&self, u: u32, v: u32) -> f64 {
        self.source.row(u as usize).dot(&self.target.row(v as usize))
    }

    pub fn score(&self, u: u32, v: u32) -> f64 {
        sigmoid(self.logit(u, v))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Edge probability `sigmoid(s_u . t_v)`.
pub fn score_edge(source_u: ArrayView1<f64>, target_v: ArrayView1<f64>) -> f64 {
    sigmoid(source_u.dot(&target_v))
}
