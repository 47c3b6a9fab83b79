use crate::error::{Error, Result};
use crate::graph::Edge;
use crate::model::DualEmbedding;
use crate::sampler::EvalNegatives;

use super::{auc, MetricReport, Task};

pub fn mix_setting(mix_ratio: f64) -> String {
    format!("mix={mix_ratio}")
}

/// AUC of held-out positives against the given negatives. Edges are ranked
/// by the logit `s_u . t_v`; the sigmoid is monotone so the AUC is the same,
/// and logits keep saturated scores distinct.
pub fn eval_link_prediction(emb: &DualEmbedding, test_pos: &[Edge], negatives: &EvalNegatives) -> Result<MetricReport> {
    let n = emb.num_nodes();
    let out_of_range = test_pos
        .iter()
        .chain(negatives.edges.iter().map(|e| &e.edge))
        .find(|&&(u, v)| u as usize >= n || v as usize >= n);
    if let Some(&(u, v)) = out_of_range {
        return Err(Error::Dimension(format!("edge ({u}, {v}) outside {n} embedded nodes")));
    }
    let pos: Vec<f64> = test_pos.iter().map(|&(u, v)| emb.logit(u, v)).collect();
    let neg: Vec<f64> = negatives.edges.iter().map(|e| emb.logit(e.edge.0, e.edge.1)).collect();
    Ok(MetricReport {
        task: Task::LinkPrediction,
        setting: mix_setting(negatives.mix_ratio),
        metrics: [("auc".to_string(), auc(&pos, &neg)?)].into(),
    })
}
