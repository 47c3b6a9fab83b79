//! End-to-end pipelines: train on the right graph, then evaluate.

use crate::error::{Error, Result};
use crate::eval::{eval_link_prediction, precision_at_k, summarize, train_linear_probe, MetricReport, MetricSummary};
use crate::graph::{DirectedGraph, FeatureTable, NodeLabels};
use crate::model::DualEmbedding;
use crate::sampler::{build_eval_negatives, split_edges, EvalNegatives};
use crate::training::{train_with, TrainConfig};

/// Which evaluation protocol to run after training.
#[derive(Debug, Clone)]
pub enum TaskSpec {
    /// Train on a split of the graph; one report per mix ratio.
    LinkPrediction { test_fraction: f64, mix_ratios: Vec<f64> },
    /// Train on the whole graph, probe `[s_v, t_v]`.
    NodeClassification { labels: NodeLabels, train_fraction: f64 },
    /// Train on the whole graph, rank targets of sampled nodes.
    Reconstruction { node_fraction: f64, ks: Vec<usize> },
}

fn train_embedding(g: &DirectedGraph, cfg: &TrainConfig, features: Option<&FeatureTable>) -> Result<DualEmbedding> {
    train_with(g, cfg, features, |_, _| {})
        .map(|out| out.embedding)
        .map_err(|f| f.error)
}

/// Link prediction: split with `cfg.seed`, build one negative set per mix
/// ratio over the shared positives, train on the train graph, evaluate each.
pub fn run_link_prediction(
    g: &DirectedGraph,
    cfg: &TrainConfig,
    test_fraction: f64,
    mix_ratios: &[f64],
    features: Option<&FeatureTable>,
) -> Result<Vec<MetricReport>> {
    let split = split_edges(g, test_fraction, cfg.seed)?;
    let negatives: Vec<EvalNegatives> = mix_ratios
        .iter()
        .map(|&r| build_eval_negatives(g, &split, r, cfg.seed))
        .collect::<Result<_>>()?;
    let emb = train_embedding(&split.train, cfg, features)?;
    negatives
        .iter()
        .map(|n| eval_link_prediction(&emb, &split.test_pos, n))
        .collect()
}

pub fn run_task(
    g: &DirectedGraph,
    cfg: &TrainConfig,
    task: &TaskSpec,
    features: Option<&FeatureTable>,
) -> Result<Vec<MetricReport>> {
    match task {
        TaskSpec::LinkPrediction {
            test_fraction,
            mix_ratios,
        } => run_link_prediction(g, cfg, *test_fraction, mix_ratios, features),
        TaskSpec::NodeClassification { labels, train_fraction } => {
            let emb = train_embedding(g, cfg, features)?;
            Ok(vec![train_linear_probe(&emb, labels, *train_fraction, cfg.seed)?])
        }
        TaskSpec::Reconstruction { node_fraction, ks } => {
            let emb = train_embedding(g, cfg, features)?;
            Ok(vec![precision_at_k(&emb, g, *node_fraction, ks, cfg.seed)?])
        }
    }
}

/// Outcome of one configuration over several seeds.
#[derive(Debug, Clone)]
pub struct RepeatedRun {
    pub label: String,
    /// One summary per setting (e.g. per mix ratio), over successful seeds.
    pub summaries: Vec<MetricSummary>,
    /// Every individual report, seed-major.
    pub reports: Vec<(u64, MetricReport)>,
    pub failures: Vec<(u64, String)>,
}

/// Runs `task` once per seed (overriding `cfg.seed`). A failed seed is
/// recorded and the remaining seeds still run.
pub fn repeat_over_seeds(
    label: &str,
    g: &DirectedGraph,
    cfg: &TrainConfig,
    task: &TaskSpec,
    seeds: &[u64],
    features: Option<&FeatureTable>,
) -> RepeatedRun {
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for &seed in seeds {
        let run_cfg = TrainConfig { seed, ..cfg.clone() };
        match run_task(g, &run_cfg, task, features) {
            Ok(rs) => reports.extend(rs.into_iter().map(|r| (seed, r))),
            Err(e) => {
                log::warn!("{label}: seed {seed} failed: {e}");
                failures.push((seed, e.to_string()));
            }
        }
    }
    let mut settings: Vec<String> = Vec::new();
    for (_, r) in &reports {
        if !settings.contains(&r.setting) {
            settings.push(r.setting.clone());
        }
    }
    let summaries = settings
        .iter()
        .filter_map(|s| {
            let group: Vec<MetricReport> = reports
                .iter()
                .filter(|(_, r)| &r.setting == s)
                .map(|(_, r)| r.clone())
                .collect();
            summarize(&group).ok()
        })
        .collect();
    RepeatedRun {
        label: label.to_owned(),
        summaries,
        reports,
        failures,
    }
}

/// One repeated run per value of config key `key`.
pub fn sweep(
    g: &DirectedGraph,
    base: &TrainConfig,
    key: &str,
    values: &[String],
    task: &TaskSpec,
    seeds: &[u64],
    features: Option<&FeatureTable>,
) -> Result<Vec<RepeatedRun>> {
    let mut configs = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        cfg.set(key, value)?;
        cfg.validate()?;
        configs.push((format!("{key}={value}"), cfg));
    }
    if configs.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one value".into()));
    }
    Ok(configs
        .iter()
        .map(|(label, cfg)| repeat_over_seeds(label, g, cfg, task, seeds, features))
        .collect())
}

/// Rows for [`crate::eval::summaries_to_csv`].
pub fn summary_rows(runs: &[RepeatedRun]) -> Vec<(String, MetricSummary)> {
    runs.iter()
        .flat_map(|r| r.summaries.iter().map(move |s| (r.label.clone(), s.clone())))
        .collect()
}
