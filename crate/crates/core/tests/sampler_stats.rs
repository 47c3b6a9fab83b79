mod common;

use std::collections::HashMap;

use coba::graph::{DirectedGraph, Edge};
use coba::sampler::{build_eval_negatives, sample_training_negatives, split_edges, NegativeKind};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Upper-tail p-value of Pearson's statistic against a uniform expectation.
fn uniform_p_value(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn small_graph() -> DirectedGraph {
    DirectedGraph::from_edges(7, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 0), (0, 3), (2, 5), (4, 1)]).0
}

#[test]
fn random_eval_negatives_are_uniform_over_non_edges() {
    let g = small_graph();
    let non_edges: Vec<Edge> = (0..7u32)
        .flat_map(|u| (0..7u32).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && !g.has_edge(u, v))
        .collect();
    let split = split_edges(&g, 0.3, 1).unwrap();
    let mut counts: HashMap<Edge, usize> = non_edges.iter().map(|&e| (e, 0)).collect();
    for seed in 0..3000 {
        let negs = build_eval_negatives(&g, &split, 0.0, seed).unwrap();
        assert_eq!(negs.count(NegativeKind::Reversed), 0);
        for n in &negs.edges {
            *counts.get_mut(&n.edge).expect("negative must be a non-edge") += 1;
        }
    }
    let counts: Vec<usize> = non_edges.iter().map(|e| counts[e]).collect();
    let p = uniform_p_value(&counts);
    assert!(p > 1e-3, "p = {p}, counts {counts:?}");
}

#[test]
fn training_negative_sources_are_uniform() {
    let g = small_graph();
    let target = 3u32;
    let candidates: Vec<u32> = (0..7u32)
        .filter(|&u| u != target && !g.has_edge(u, target))
        .collect();
    let mut counts = [0usize; 7];
    let mut r = common::rng(2);
    for _ in 0..4000 {
        let batch = sample_training_negatives(&g, 2, &mut r);
        for &(u, v) in &batch.src_neg {
            assert!(!g.has_edge(u, v) && u != v);
            if v == target {
                counts[u as usize] += 1;
            }
        }
    }
    let observed: Vec<usize> = candidates.iter().map(|&u| counts[u as usize]).collect();
    assert_eq!(observed.iter().sum::<usize>(), 8000);
    let p = uniform_p_value(&observed);
    assert!(p > 1e-3, "p = {p}, counts {observed:?}");
}

#[test]
fn split_is_uniform_over_edges() {
    let g = small_graph();
    let edges: Vec<Edge> = g.edges().collect();
    let mut counts: HashMap<Edge, usize> = HashMap::new();
    for seed in 0..3000 {
        for e in split_edges(&g, 0.3, seed).unwrap().test_pos {
            *counts.entry(e).or_default() += 1;
        }
    }
    let observed: Vec<usize> = edges.iter().map(|e| counts.get(e).copied().unwrap_or(0)).collect();
    let p = uniform_p_value(&observed);
    assert!(p > 1e-3, "p = {p}, counts {observed:?}");
}
