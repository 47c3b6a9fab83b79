//! Link prediction, node classification and graph reconstruction metrics.

mod auc;
mod link;
mod probe;
mod reconstruction;
mod report;

pub use auc::auc;
pub use link::{eval_link_prediction, mix_setting};
pub use probe::{
    concat_features, evaluate_probe, f1_scores, stratified_split, train_linear_probe, LinearProbe, ProbeConfig,
};
pub use reconstruction::{node_precision_at_k, precision_at_k, sample_nodes, top_k_targets};
pub use report::{
    config_hash, mean_stddev, summaries_to_csv, summarize, MetricDocument, MetricReport, MetricStat, MetricSummary,
    Task,
};
