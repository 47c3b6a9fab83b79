use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, NodeId};
use crate::model::DualEmbedding;
use crate::rng;
use crate::sampler::rounded_count;

use super::{MetricReport, Task};

/// `round(fraction * N)` distinct nodes (at least one), ascending.
pub fn sample_nodes(num_nodes: usize, fraction: f64, seed: u64) -> Vec<NodeId> {
    let count = rounded_count(num_nodes, fraction).clamp(1, num_nodes);
    let mut rng = rng::stream(seed, "reconstruction");
    let mut nodes: Vec<NodeId> = index::sample(&mut rng, num_nodes, count)
        .into_iter()
        .map(|i| i as NodeId)
        .collect();
    nodes.sort_unstable();
    nodes
}

/// The `k` nodes `u != v` with the largest `s_v . t_u`, ties to the smaller id.
pub fn top_k_targets(emb: &DualEmbedding, v: NodeId, k: usize) -> Vec<NodeId> {
    let scores = emb.target.dot(&emb.source.row(v as usize));
    let mut ranked: Vec<NodeId> = (0..emb.num_nodes() as NodeId).filter(|&u| u != v).collect();
    let order = |a: &NodeId, b: &NodeId| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    let k = k.min(ranked.len());
    if k < ranked.len() && k > 0 {
        ranked.select_nth_unstable_by(k - 1, order);
        ranked.truncate(k);
    }
    ranked.sort_unstable_by(order);
    ranked.truncate(k);
    ranked
}

/// Precision@k of one node for each `k` in `ks`; the denominator is always `k`.
pub fn node_precision_at_k(emb: &DualEmbedding, g: &DirectedGraph, v: NodeId, ks: &[usize]) -> Vec<f64> {
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let top = top_k_targets(emb, v, max_k);
    let mut hits = vec![0usize; top.len() + 1];
    for (i, &u) in top.iter().enumerate() {
        hits[i + 1] = hits[i] + usize::from(g.has_edge(v, u));
    }
    ks.iter()
        .map(|&k| hits[k.min(top.len())] as f64 / k as f64)
        .collect()
}

/// Mean precision@k over a random `node_fraction` of the nodes of `g`.
pub fn precision_at_k(
    emb: &DualEmbedding,
    g: &DirectedGraph,
    node_fraction: f64,
    ks: &[usize],
    seed: u64,
) -> Result<MetricReport> {
    if emb.num_nodes() != g.num_nodes() {
        return Err(Error::Dimension(format!(
            "graph has {} nodes, embeddings {}",
            g.num_nodes(),
            emb.num_nodes()
        )));
    }
    if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("ks must be positive and strictly ascending".into()));
    }
    if !(node_fraction > 0.0 && node_fraction <= 1.0) {
        return Err(Error::InvalidArgument("node fraction must lie in (0, 1]".into()));
    }
    let nodes = sample_nodes(g.num_nodes(), node_fraction, seed);
    let per_node: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|&v| node_precision_at_k(emb, g, v, ks))
        .collect();
    let metrics = ks
        .iter()
        .enumerate()
        .map(|(i, k)| {
            // Summed in node order so the result does not depend on threading.
            let mean = per_node.iter().map(|p| p[i]).sum::<f64>() / nodes.len() as f64;
            (format!("precision@{k}"), mean)
        })
        .collect();
    Ok(MetricReport {
        task: Task::GraphReconstruction,
        setting: format!("node_fraction={node_fraction}"),
        metrics,
    })
}
