//! Negative-sampled edge training.

mod adam;
mod config;
mod loss;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::TrainConfig;
pub use loss::{bce_loss, bce_with_logits, softplus, BceTerms};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_index, DirectedGraph, Edge, FeatureTable, NodeId};
use crate::model::{
    backward, forward, forward_rows_with_dropout, init_model, DualEmbedding, Dropout, Gradients, ModelParams,
    SampledNeighborhood,
};
use crate::rng;
use crate::sampler::sample_training_negatives;

/// Per-epoch training summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub pos_term: f64,
    pub neg_term: f64,
    /// Mean over steps of the global gradient L2 norm.
    pub grad_norm: f64,
}

/// Loss and gradients for one batch of positive and negative edges.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub terms: BceTerms,
    pub grads: Gradients,
}

/// Forward, loss and backward for one batch.
///
/// With `tied` the decoder scores `u -> v` as `s_u . s_v`, the symmetric
/// control in which source and target roles share one embedding.
pub fn loss_and_gradients(
    params: &ModelParams,
    hoods: &[SampledNeighborhood],
    pos: &[Edge],
    neg: &[Edge],
    tied: bool,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<StepOutput> {
    let edges = || pos.iter().chain(neg.iter());
    let (src_nodes, tgt_nodes): (Vec<NodeId>, Vec<NodeId>) = if tied {
        (edges().flat_map(|&(u, v)| [u, v]).collect(), Vec::new())
    } else {
        edges().copied().unzip()
    };
    let cache = forward_rows_with_dropout(params, hoods, &src_nodes, &tgt_nodes, dropout)?;
    let s_out = cache.source_out();
    let t_out = if tied { s_out } else { cache.target_out() };
    let t_row = |v: NodeId| if tied { cache.source_row(v) } else { cache.target_row(v) };

    let logit = |&(u, v): &Edge| s_out.row(cache.source_row(u)).dot(&t_out.row(t_row(v)));
    let pos_logits: Vec<f64> = pos.iter().map(logit).collect();
    let neg_logits: Vec<f64> = neg.iter().map(logit).collect();
    let (terms, d_pos, d_neg) = bce_with_logits(&pos_logits, &neg_logits)?;

    let d = params.dim();
    let mut d_s = Array2::<f64>::zeros((s_out.nrows(), d));
    let mut d_t = Array2::<f64>::zeros((cache.target_out().nrows(), d));
    for (&(u, v), &g) in pos.iter().zip(&d_pos).chain(neg.iter().zip(&d_neg)) {
        let (ru, rv) = (cache.source_row(u), t_row(v));
        d_s.row_mut(ru).scaled_add(g, &t_out.row(rv));
        if tied {
            d_s.row_mut(rv).scaled_add(g, &s_out.row(ru));
        } else {
            d_t.row_mut(rv).scaled_add(g, &s_out.row(ru));
        }
    }
    let grads = backward(params, hoods, &cache, d_s, d_t);
    Ok(StepOutput { terms, grads })
}

/// Parameters and optimizer state at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: ModelParams,
    pub optimizer: AdamState,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub optimizer: AdamState,
    pub embedding: DualEmbedding,
    pub reports: Vec<LossReport>,
}

/// A failed run, with the last epoch that completed cleanly.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: Option<Checkpoint>,
    pub reports: Vec<LossReport>,
}

impl std::fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        TrainFailure {
            error,
            last_good: None,
            reports: Vec::new(),
        }
    }
}

pub fn train(g: &DirectedGraph, cfg: &TrainConfig) -> std::result::Result<TrainOutput, TrainFailure> {
    train_with(g, cfg, None, |_, _| {})
}

/// Trains on every edge of `g`. `on_epoch` sees each report with the
/// parameters and optimizer state at the end of that epoch.
///
/// Per epoch: fresh neighbor samples (one per layer), fresh training
/// negatives, shuffled positives split into batches of `batch_size`, and the
/// negatives spread evenly over those batches. The returned embedding comes
/// from a forward pass over whole (unsampled) neighborhoods.
pub fn train_with(
    g: &DirectedGraph,
    cfg: &TrainConfig,
    features: Option<&FeatureTable>,
    mut on_epoch: impl FnMut(&LossReport, &Checkpoint),
) -> std::result::Result<TrainOutput, TrainFailure> {
    cfg.validate()?;
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph.into());
    }
    let mut params = init_model(&cfg.model_config(g.num_nodes()), features, cfg.seed)?;
    let mut optimizer = AdamState::new(&params);
    let adam = cfg.adam();
    let idx = degree_index(g);
    let positives: Vec<Edge> = g.edges().collect();
    let mut reports = Vec::with_capacity(cfg.epochs);
    let mut last_good: Option<Checkpoint> = None;
    let mut dropout_rng = rng::stream(cfg.seed, "dropout");

    for epoch in 1..=cfg.epochs {
        let e = epoch as u64;
        let mut nb_rng = rng::indexed_stream(cfg.seed, "neighbor", e);
        let hoods: Vec<SampledNeighborhood> = (0..cfg.layers)
            .map(|_| SampledNeighborhood::sample(g, &idx, cfg.mode, cfg.neighbor_k, &mut nb_rng))
            .collect();
        let mut neg_rng = rng::indexed_stream(cfg.seed, "negative", e);
        let mut negatives: Vec<Edge> = sample_training_negatives(g, cfg.neg_per_node, &mut neg_rng)
            .all()
            .collect();
        let mut batch_rng = rng::indexed_stream(cfg.seed, "batch", e);
        let mut pos = positives.clone();
        pos.shuffle(&mut batch_rng);
        negatives.shuffle(&mut batch_rng);

        let n_batches = pos.len().div_ceil(cfg.batch_size);
        let (mut loss_sum, mut pos_sum, mut neg_sum, mut norm_sum) = (0.0, 0.0, 0.0, 0.0);
        for b in 0..n_batches {
            let p = &pos[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(pos.len())];
            let q = &negatives[b * negatives.len() / n_batches..(b + 1) * negatives.len() / n_batches];
            let mut dropout = Dropout {
                rate: cfg.dropout,
                rng: &mut dropout_rng,
            };
            let step = loss_and_gradients(&params, &hoods, p, q, cfg.tie_embeddings, Some(&mut dropout))
                .map_err(|error| failure(error, &last_good, &reports))?;
            if !step.terms.loss.is_finite() {
                return Err(failure(Error::Diverged { epoch }, &last_good, &reports));
            }
            optimizer
                .step(&mut params, &step.grads, &adam)
                .map_err(|error| failure(error, &last_good, &reports))?;
            loss_sum += step.terms.loss;
            pos_sum += step.terms.pos_term;
            neg_sum += step.terms.neg_term;
            norm_sum += step.grads.squared_norm().sqrt();
        }
        let nb = n_batches as f64;
        let report = LossReport {
            epoch,
            mean_loss: loss_sum / nb,
            pos_term: pos_sum / nb,
            neg_term: neg_sum / nb,
            grad_norm: norm_sum / nb,
        };
        log::debug!("epoch {epoch}: loss {:.6}", report.mean_loss);
        reports.push(report);
        let checkpoint = Checkpoint {
            epoch,
            params: params.clone(),
            optimizer: optimizer.clone(),
        };
        on_epoch(&report, &checkpoint);
        last_good = Some(checkpoint);
    }

    let embedding = final_embedding(g, &params, cfg.tie_embeddings)?;
    Ok(TrainOutput {
        params,
        optimizer,
        embedding,
        reports,
    })
}

fn failure(error: Error, last_good: &Option<Checkpoint>, reports: &[LossReport]) -> TrainFailure {
    TrainFailure {
        error,
        last_good: last_good.clone(),
        reports: reports.to_vec(),
    }
}

/// Embeddings from whole neighborhoods of `g`.
pub fn final_embedding(g: &DirectedGraph, params: &ModelParams, tied: bool) -> Result<DualEmbedding> {
    let idx = degree_index(g);
    let hoods: Vec<SampledNeighborhood> = (0..params.num_layers())
        .map(|_| SampledNeighborhood::full(g, &idx, params.mode))
        .collect();
    let mut emb = forward(params, &hoods)?;
    if tied {
        emb.target = emb.source.clone();
    }
    Ok(emb)
}
