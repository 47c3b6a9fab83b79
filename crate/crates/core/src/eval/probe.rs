//! Multinomial logistic-regression probe on frozen `[s_v, t_v]` features.

use std::collections::BTreeSet;

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{NodeId, NodeLabels};
use crate::model::DualEmbedding;
use crate::rng;
use crate::sampler::rounded_count;

use super::{MetricReport, Task};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub train_fraction: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            train_fraction: 0.7,
            iterations: 200,
            l2: 1e-4,
        }
    }
}

/// Per-class stratified split of the labeled nodes. Each class contributes
/// `round(train_fraction * size)` nodes to the training side.
pub fn stratified_split(labels: &NodeLabels, train_fraction: f64, seed: u64) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut by_class: Vec<Vec<NodeId>> = vec![Vec::new(); labels.num_classes];
    for (v, c) in labels.labeled_nodes() {
        by_class[c as usize].push(v);
    }
    let mut rng = rng::stream(seed, "probe-split");
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let k = rounded_count(members.len(), train_fraction);
        train.extend_from_slice(&members[..k]);
        test.extend_from_slice(&members[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Micro- and macro-averaged F1. Macro averages over classes present in
/// either the truth or the predictions.
pub fn f1_scores(truth: &[u32], predicted: &[u32], num_classes: usize) -> (f64, f64) {
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fn_ = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t == p {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let micro = tp.iter().sum::<usize>() as f64 / truth.len().max(1) as f64;
    let present: BTreeSet<u32> = truth.iter().chain(predicted).copied().collect();
    let macro_ = present
        .iter()
        .map(|&c| {
            let c = c as usize;
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum::<f64>()
        / present.len().max(1) as f64;
    (micro, macro_)
}

/// Fitted probe: standardization plus softmax weights.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Array1<f64>,
    scale: Array1<f64>,
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearProbe {
    /// Full-batch accelerated gradient descent on mean cross-entropy plus
    /// `l2 / 2 * |W|^2`, step `1 / L` from the bound
    /// `L <= lambda_max(X'X / n) / 2 + l2` (bias column included in `X`).
    pub fn fit(features: &Array2<f64>, labels: &[u32], num_classes: usize, cfg: &ProbeConfig) -> Self {
        let (n, f) = features.dim();
        let mean = features.mean_axis(Axis(0)).expect("non-empty");
        let std = features.std_axis(Axis(0), 0.0);
        let scale = std.mapv(|s| if s > 1e-12 { 1.0 / s } else { 0.0 });
        let x = standardize(features, &mean, &scale);
        let xb = concatenate![Axis(1), x, Array2::<f64>::ones((n, 1))];
        let lipschitz = 0.5 * max_eigenvalue(&xb) + cfg.l2;
        let step = 1.0 / lipschitz.max(1e-12);

        let mut y = Array2::<f64>::zeros((n, num_classes));
        for (i, &c) in labels.iter().enumerate() {
            y[[i, c as usize]] = 1.0;
        }
        // Parameters stacked as (f + 1) x C; last row is the bias.
        let mut theta = Array2::<f64>::zeros((f + 1, num_classes));
        let mut prev = theta.clone();
        let mut momentum_t = 1.0f64;
        for _ in 0..cfg.iterations {
            let next_t = (1.0 + (1.0 + 4.0 * momentum_t * momentum_t).sqrt()) / 2.0;
            let lookahead = &theta + &((&theta - &prev) * ((momentum_t - 1.0) / next_t));
            let mut probs = xb.dot(&lookahead);
            softmax_rows(&mut probs);
            let mut grad = xb.t().dot(&(probs - &y)) / n as f64;
            grad.slice_mut(s![..f, ..]).scaled_add(cfg.l2, &lookahead.slice(s![..f, ..]));
            prev = theta;
            theta = lookahead - grad * step;
            momentum_t = next_t;
        }
        LinearProbe {
            mean,
            scale,
            weights: theta.slice(s![..f, ..]).to_owned(),
            bias: theta.row(f).to_owned(),
        }
    }

    pub fn predict(&self, features: &Array2<f64>) -> Vec<u32> {
        let x = standardize(features, &self.mean, &self.scale);
        let logits = x.dot(&self.weights) + &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                best as u32
            })
            .collect()
    }
}

fn standardize(x: &Array2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    (x - mean) * scale
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Largest eigenvalue of `X'X / n` by power iteration.
fn max_eigenvalue(x: &Array2<f64>) -> f64 {
    let n = x.nrows() as f64;
    let mut v = Array1::<f64>::ones(x.ncols());
    v /= v.dot(&v).sqrt();
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = x.t().dot(&x.dot(&v)) / n;
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // Power iteration approaches from below; pad slightly.
    lambda * 1.05
}

/// Node features `[s_v, t_v]` for the given nodes.
pub fn concat_features(emb: &DualEmbedding, nodes: &[NodeId]) -> Array2<f64> {
    let idx: Vec<usize> = nodes.iter().map(|&v| v as usize).collect();
    concatenate![
        Axis(1),
        emb.source.select(Axis(0), &idx),
        emb.target.select(Axis(0), &idx)
    ]
}

/// Stratified split, probe fit on the training side, Micro/Macro-F1 on the
/// test side.
pub fn train_linear_probe(
    emb: &DualEmbedding,
    labels: &NodeLabels,
    train_fraction: f64,
    seed: u64,
) -> Result<MetricReport> {
    let cfg = ProbeConfig {
        train_fraction,
        ..ProbeConfig::default()
    };
    evaluate_probe(emb, labels, &cfg, seed)
}

pub fn evaluate_probe(emb: &DualEmbedding, labels: &NodeLabels, cfg: &ProbeConfig, seed: u64) -> Result<MetricReport> {
    if labels.labels.len() != emb.num_nodes() {
        return Err(Error::Dimension(format!(
            "labels cover {} nodes, embeddings {}",
            labels.labels.len(),
            emb.num_nodes()
        )));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(Error::InvalidArgument("train fraction must lie in (0, 1)".into()));
    }
    let (train, test) = stratified_split(labels, cfg.train_fraction, seed);
    let label_of = |v: &NodeId| labels.labels[*v as usize].expect("labeled");
    let y_train: Vec<u32> = train.iter().map(label_of).collect();
    for (_, c) in labels.labeled_nodes() {
        if !y_train.contains(&c) {
            return Err(Error::ClassMissingFromTrain(c));
        }
    }
    if test.is_empty() {
        return Err(Error::InvalidArgument("stratified split left no test nodes".into()));
    }
    let probe = LinearProbe::fit(&concat_features(emb, &train), &y_train, labels.num_classes, cfg);
    let y_test: Vec<u32> = test.iter().map(label_of).collect();
    let predicted = probe.predict(&concat_features(emb, &test));
    let (micro, macro_) = f1_scores(&y_test, &predicted, labels.num_classes);
    Ok(MetricReport {
        task: Task::NodeClassification,
        setting: format!("train_fraction={}", cfg.train_fraction),
        metrics: [("micro_f1".to_string(), micro), ("macro_f1".to_string(), macro_)].into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(classes: &[u32]) -> NodeLabels {
        let c = *classes.iter().max().unwrap() as usize + 1;
        NodeLabels {
            labels: classes.iter().map(|&x| Some(x)).collect(),
            num_classes: c,
            class_names: (0..c).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn one_hot_embeddings_are_separable() {
        let classes: Vec<u32> = (0..60).map(|i| i % 3).collect();
        let n = classes.len();
        let mut source = Array2::zeros((n, 3));
        for (i, &c) in classes.iter().enumerate() {
            source[[i, c as usize]] = 1.0;
        }
        let emb = DualEmbedding {
            target: source.clone(),
            source,
        };
        let r = train_linear_probe(&emb, &labels(&classes), 0.7, 1).unwrap();
        assert_eq!(r.metrics["micro_f1"], 1.0);
        assert_eq!(r.metrics["macro_f1"], 1.0);
    }

    #[test]
    fn identical_embeddings_predict_majority() {
        // 50 of class 0, 30 of class 1, 20 of class 2; stratified test side
        // gets 15 / 9 / 6, so predicting class 0 everywhere scores 15 / 30.
        let mut classes = vec![0u32; 50];
        classes.extend(vec![1u32; 30]);
        classes.extend(vec![2u32; 20]);
        let emb = DualEmbedding {
            source: Array2::from_elem((100, 4), 0.3),
            target: Array2::from_elem((100, 4), -1.0),
        };
        let lab = labels(&classes);
        let (train, test) = stratified_split(&lab, 0.7, 5);
        assert_eq!((train.len(), test.len()), (70, 30));
        let majority_in_test = test.iter().filter(|&&v| classes[v as usize] == 0).count();
        let r = train_linear_probe(&emb, &lab, 0.7, 5).unwrap();
        assert_eq!(r.metrics["micro_f1"], majority_in_test as f64 / 30.0);
        assert!((r.metrics["micro_f1"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f1_hand_computed() {
        // class 0: tp 1, fp 1, fn 1 -> 0.5; class 1: tp 1, fp 1, fn 1 -> 0.5;
        // class 2: tp 0, fp 0, fn 0 absent; micro 2/4.
        let (mi, ma) = f1_scores(&[0, 0, 1, 1], &[0, 1, 1, 0], 3);
        assert_eq!(mi, 0.5);
        assert_eq!(ma, 0.5);
    }

    #[test]
    fn stratification_keeps_class_ratios() {
        let classes: Vec<u32> = (0..200).map(|i| if i < 150 { 0 } else { 1 }).collect();
        let (train, test) = stratified_split(&labels(&classes), 0.7, 3);
        let ones = train.iter().filter(|&&v| v >= 150).count();
        assert_eq!(ones, 35);
        assert_eq!(train.len() + test.len(), 200);
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let emb = DualEmbedding {
            source: Array2::zeros((3, 2)),
            target: Array2::zeros((3, 2)),
        };
        assert!(train_linear_probe(&emb, &labels(&[0, 1]), 0.7, 0).is_err());
    }
}
