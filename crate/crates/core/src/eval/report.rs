use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    LinkPrediction,
    NodeClassification,
    GraphReconstruction,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::LinkPrediction => "link_prediction",
            Task::NodeClassification => "node_classification",
            Task::GraphReconstruction => "graph_reconstruction",
        })
    }
}

/// Metrics from a single evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    /// Free-form setting label, e.g. `mix=0.5`.
    pub setting: String,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub stddev: f64,
}

/// Mean and spread of one task/setting over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub task: Task,
    pub setting: String,
    pub runs: usize,
    pub metrics: BTreeMap<String, MetricStat>,
}

pub fn mean_stddev(values: &[f64]) -> MetricStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stddev = if values.len() > 1 {
        (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricStat { mean, stddev }
}

/// Aggregates runs that share a task and setting.
pub fn summarize(reports: &[MetricReport]) -> Result<MetricSummary> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to summarize".into()))?;
    if reports
        .iter()
        .any(|r| r.task != first.task || r.setting != first.setting)
    {
        return Err(Error::InvalidArgument("reports mix tasks or settings".into()));
    }
    let metrics = first
        .metrics
        .keys()
        .map(|k| {
            let values: Vec<f64> = reports.iter().filter_map(|r| r.metrics.get(k).copied()).collect();
            (k.clone(), mean_stddev(&values))
        })
        .collect();
    Ok(MetricSummary {
        task: first.task,
        setting: first.setting.clone(),
        runs: reports.len(),
        metrics,
    })
}

/// The JSON document written for each evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDocument {
    pub task: Task,
    pub dataset: String,
    pub setting: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub config_hash: String,
}

impl MetricDocument {
    pub fn new(report: &MetricReport, dataset: &str, seed: u64, config_hash: String) -> Self {
        MetricDocument {
            task: report.task,
            dataset: dataset.to_owned(),
            setting: report.setting.clone(),
            seed,
            metrics: report.metrics.clone(),
            config_hash,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric document serializes")
    }
}

/// SHA-256 of the canonical JSON form (object keys sorted), so the hash does
/// not depend on field order.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let canonical = canonical_json(&value);
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn canonical_json(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// CSV with one row per summary and `<metric>_mean,<metric>_std` columns.
pub fn summaries_to_csv(rows: &[(String, MetricSummary)]) -> String {
    let mut metric_names: Vec<&String> = rows.iter().flat_map(|(_, s)| s.metrics.keys()).collect();
    metric_names.sort();
    metric_names.dedup();
    let mut out = String::from("label,task,setting,runs");
    for m in &metric_names {
        out.push_str(&format!(",{m}_mean,{m}_std"));
    }
    out.push('\n');
    for (label, s) in rows {
        out.push_str(&format!("{label},{},{},{}", s.task, s.setting, s.runs));
        for m in &metric_names {
            match s.metrics.get(*m) {
                Some(st) => out.push_str(&format!(",{},{}", st.mean, st.stddev)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}
