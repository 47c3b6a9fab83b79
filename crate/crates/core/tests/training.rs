mod common;

use coba::graph::DirectedGraph;
use coba::model::{Activation, AggregationMode};
use coba::training::{train, train_with, TrainConfig};
use coba::Error;
use common::{nonempty_digraph, rng};

fn single_edge() -> DirectedGraph {
    DirectedGraph::from_edges(2, &[(0, 1)]).0
}

fn trained_scores(activation: Activation) -> (f64, f64) {
    let cfg = TrainConfig {
        activation,
        ..TrainConfig::default()
    };
    let out = train(&single_edge(), &cfg).unwrap();
    assert_eq!(out.reports.len(), 40);
    (out.embedding.score(0, 1), out.embedding.score(1, 0))
}

#[test]
fn single_edge_is_learned_in_both_directions() {
    for activation in [Activation::Identity, Activation::Tanh] {
        let (forward, backward) = trained_scores(activation);
        assert!(forward > 0.9, "{activation}: score(0->1) = {forward}");
        assert!(backward < 0.5, "{activation}: score(1->0) = {backward}");
    }
}

#[test]
fn single_edge_under_relu() {
    // ReLU outputs are non-negative, so s_1 . t_0 >= 0 and the reverse score
    // cannot fall below one half; training drives it to that floor.
    let (forward, backward) = trained_scores(Activation::Relu);
    assert!(forward > 0.9, "score(0->1) = {forward}");
    assert!(backward >= 0.5);
    assert!(backward < 0.5 + 1e-3, "score(1->0) = {backward}");
}

#[test]
fn loss_decreases_on_toy_graphs() {
    let mut r = rng(7);
    let mut failures = Vec::new();
    for trial in 0..20 {
        // A directed cycle keeps the graph connected; extra random edges on top.
        let extra = nonempty_digraph(10, 0.15, &mut r);
        let mut edges: Vec<_> = extra.edges().collect();
        edges.extend((0..10u32).map(|i| (i, (i + 1) % 10)));
        let g = DirectedGraph::from_edges(10, &edges).0;
        let cfg = TrainConfig {
            seed: trial,
            ..TrainConfig::default()
        };
        let reports = train(&g, &cfg).unwrap().reports;
        let (first, last) = (reports[0].mean_loss, reports[39].mean_loss);
        if last.is_nan() || last >= first {
            failures.push((trial, first, last));
        }
    }
    assert!(failures.len() <= 1, "loss did not decrease: {failures:?}");
}

#[test]
fn reports_are_bit_identical_under_seed() {
    let mut r = rng(3);
    let g = nonempty_digraph(15, 0.2, &mut r);
    let cfg = TrainConfig {
        dim: 16,
        epochs: 5,
        layers: 2,
        batch_size: 8,
        dropout: 0.1,
        seed: 99,
        ..TrainConfig::default()
    };
    let a = train(&g, &cfg).unwrap();
    let b = train(&g, &cfg).unwrap();
    let bits = |rs: &[coba::training::LossReport]| -> Vec<[u64; 4]> {
        rs.iter()
            .map(|r| {
                [
                    r.mean_loss.to_bits(),
                    r.pos_term.to_bits(),
                    r.neg_term.to_bits(),
                    r.grad_norm.to_bits(),
                ]
            })
            .collect()
    };
    assert_eq!(bits(&a.reports), bits(&b.reports));
    assert_eq!(a.embedding, b.embedding);
    let c = train(&g, &TrainConfig { seed: 100, ..cfg }).unwrap();
    assert_ne!(bits(&a.reports), bits(&c.reports));
}

#[test]
fn losses_are_non_negative() {
    let mut r = rng(5);
    let g = nonempty_digraph(12, 0.2, &mut r);
    for mode in AggregationMode::ALL {
        let cfg = TrainConfig {
            dim: 8,
            epochs: 3,
            mode,
            ..TrainConfig::default()
        };
        for rep in train(&g, &cfg).unwrap().reports {
            assert!(rep.mean_loss >= 0.0 && rep.pos_term >= 0.0 && rep.neg_term >= 0.0);
            assert!(rep.grad_norm.is_finite());
        }
    }
}

#[test]
fn divergence_keeps_last_good_checkpoint() {
    let mut r = rng(9);
    let g = nonempty_digraph(8, 0.3, &mut r);
    let cfg = TrainConfig {
        dim: 4,
        epochs: 10,
        learning_rate: 1e200,
        activation: Activation::Identity,
        ..TrainConfig::default()
    };
    let failure = train(&g, &cfg).unwrap_err();
    assert!(
        matches!(failure.error, Error::Diverged { .. } | Error::NonFiniteGradient(_)),
        "{}",
        failure.error
    );
    let last = failure.last_good.expect("at least one clean epoch");
    assert_eq!(last.epoch, failure.reports.len());
    assert!(last.params.source0.iter().all(|x| x.is_finite()));
}

#[test]
fn epoch_callback_sees_every_epoch() {
    let g = single_edge();
    let cfg = TrainConfig {
        dim: 4,
        epochs: 6,
        ..TrainConfig::default()
    };
    let mut seen = Vec::new();
    let out = train_with(&g, &cfg, None, |rep, ck| seen.push((rep.epoch, ck.epoch))).unwrap();
    assert_eq!(seen, (1..=6).map(|e| (e, e)).collect::<Vec<_>>());
    assert_eq!(out.optimizer.step, 6);
}

#[test]
fn frozen_feature_tables_stay_fixed() {
    let g = single_edge();
    let features = coba::graph::FeatureTable {
        rows: 2,
        cols: 3,
        data: vec![1.0, 0.0, 0.5, -1.0, 2.0, 0.0],
    };
    let cfg = TrainConfig {
        dim: 3,
        epochs: 4,
        freeze_tables: true,
        ..TrainConfig::default()
    };
    let out = train_with(&g, &cfg, Some(&features), |_, _| {}).unwrap();
    assert_eq!(out.params.source0.as_slice().unwrap(), &features.data[..]);
    assert_eq!(out.params.target0.as_slice().unwrap(), &features.data[..]);
}

#[test]
fn full_mode_has_more_parameters_than_ablation() {
    let count = |mode| {
        let cfg = TrainConfig {
            dim: 8,
            mode,
            ..TrainConfig::default()
        };
        coba::model::init_model(&cfg.model_config(10), None, 0)
            .unwrap()
            .trainable_parameter_count()
    };
    assert!(count(AggregationMode::Full) > count(AggregationMode::NoReverseNoCollab));
}
