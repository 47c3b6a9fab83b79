//! Dual source/target embeddings for directed graphs, with collaborative
//! bi-directional neighborhood aggregation, negative-sampled training and
//! link prediction, node classification and reconstruction evaluation.

pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph;
pub mod io;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod training;

pub use error::{Error, Result};
pub use graph::{DegreeIndex, DirectedGraph, Edge, NodeId, NodeLabels};
pub use model::{AggregationMode, DualEmbedding, ModelParams};
pub use training::{train, TrainConfig};
