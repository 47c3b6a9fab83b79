//! Helpers shared by the integration test targets: graph generators, random
//! parameters, a straight-line forward oracle and a finite-difference check.
#![allow(dead_code)]

use coba::graph::{degree_index, DirectedGraph, Edge, NodeId};
use coba::model::{forward_rows, Activation, AggregationMode, LayerWeights, ModelParams, SampledNeighborhood};
use coba::rng::{self, Rng};
use coba::sampler::sample_training_negatives;
use coba::training::loss_and_gradients;
use ndarray::Array2;
use rand::Rng as _;

pub fn rng(seed: u64) -> Rng {
    rng::stream(seed, "integration-test")
}

/// Each ordered pair (no self-loops) present with probability `p`.
pub fn random_digraph(n: usize, p: f64, rng: &mut Rng) -> DirectedGraph {
    let mut edges = Vec::new();
    for u in 0..n as NodeId {
        for v in 0..n as NodeId {
            if u != v && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    DirectedGraph::from_edges(n, &edges).0
}

/// Like [`random_digraph`] but with at least one edge.
pub fn nonempty_digraph(n: usize, p: f64, rng: &mut Rng) -> DirectedGraph {
    loop {
        let g = random_digraph(n, p, rng);
        if g.num_edges() > 0 {
            return g;
        }
    }
}

/// Graph number `code` among all digraphs on `n` nodes without self-loops:
/// bit `i` of `code` selects the `i`-th ordered pair.
pub fn digraph_from_code(n: usize, code: u64) -> DirectedGraph {
    let pairs: Vec<Edge> = (0..n as NodeId)
        .flat_map(|u| (0..n as NodeId).filter(move |&v| v != u).map(move |v| (u, v)))
        .collect();
    let edges: Vec<Edge> = pairs
        .iter()
        .enumerate()
        .filter(|(i, _)| code >> i & 1 == 1)
        .map(|(_, &e)| e)
        .collect();
    DirectedGraph::from_edges(n, &edges).0
}

/// Parameters with every entry uniform in `[-scale, scale]`.
pub fn random_params(
    n: usize,
    d: usize,
    layers: usize,
    mode: AggregationMode,
    activation: Activation,
    scale: f64,
    rng: &mut Rng,
) -> ModelParams {
    let mut draw = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || rng.gen_range(-scale..scale));
    let blocks = mode.input_blocks();
    let source0 = draw(n, d);
    let target0 = draw(n, d);
    let layers = (0..layers)
        .map(|_| LayerWeights {
            ws: draw(blocks * d, d),
            wt: draw(blocks * d, d),
        })
        .collect();
    ModelParams {
        source0,
        target0,
        layers,
        activation,
        mode,
        tables_frozen: false,
    }
}

pub fn sampled_hoods(g: &DirectedGraph, mode: AggregationMode, layers: usize, k: usize, rng: &mut Rng) -> Vec<SampledNeighborhood> {
    let idx = degree_index(g);
    (0..layers)
        .map(|_| SampledNeighborhood::sample(g, &idx, mode, k, rng))
        .collect()
}

pub fn full_hoods(g: &DirectedGraph, mode: AggregationMode, layers: usize) -> Vec<SampledNeighborhood> {
    let idx = degree_index(g);
    (0..layers).map(|_| SampledNeighborhood::full(g, &idx, mode)).collect()
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Identity => x,
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
    }
}

/// Straight-line forward pass over whole neighborhoods, written from the
/// update rule alone with scalar loops over an edge list.
pub fn naive_forward(g: &DirectedGraph, params: &ModelParams) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = params.source0.nrows();
    let d = params.source0.ncols();
    let edges: Vec<Edge> = g.edges().collect();
    let reverse = params.mode == AggregationMode::Full;
    let collab = params.mode != AggregationMode::NoReverseNoCollab;

    let pointing_in = |v: usize| -> Vec<usize> {
        edges.iter().filter(|e| e.1 as usize == v).map(|e| e.0 as usize).collect()
    };
    let pointed_to = |v: usize| -> Vec<usize> {
        edges.iter().filter(|e| e.0 as usize == v).map(|e| e.1 as usize).collect()
    };
    let mut src_pool = Vec::new();
    let mut tgt_pool = Vec::new();
    for v in 0..n {
        let (ins, outs) = (pointing_in(v), pointed_to(v));
        src_pool.push(if ins.is_empty() && reverse { outs.clone() } else { ins.clone() });
        tgt_pool.push(if outs.is_empty() && reverse { ins } else { outs });
    }

    let to_rows = |m: &Array2<f64>| -> Vec<Vec<f64>> { m.rows().into_iter().map(|r| r.to_vec()).collect() };
    let mut s = to_rows(&params.source0);
    let mut t = to_rows(&params.target0);
    for layer in &params.layers {
        let mut s_next = vec![vec![0.0; d]; n];
        let mut t_next = vec![vec![0.0; d]; n];
        for v in 0..n {
            for (own, cross, pool, w, out) in [
                (&s, &t, &src_pool[v], &layer.ws, &mut s_next[v]),
                (&t, &s, &tgt_pool[v], &layer.wt, &mut t_next[v]),
            ] {
                let mut x: Vec<f64> = own[v].clone();
                if collab {
                    x.extend_from_slice(&cross[v]);
                }
                for j in 0..d {
                    let mut total = 0.0;
                    for &u in pool.iter() {
                        total += own[u][j];
                    }
                    x.push(if pool.is_empty() { 0.0 } else { total / pool.len() as f64 });
                }
                for j in 0..d {
                    let mut acc = 0.0;
                    for (i, xi) in x.iter().enumerate() {
                        acc += xi * w[[i, j]];
                    }
                    out[j] = act(params.activation, acc);
                }
            }
        }
        s = s_next;
        t = t_next;
    }
    (s, t)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries: usize,
}

/// Compares analytical gradients of the batch loss (all edges of `g` as
/// positives, one sampled negative per node and direction) against central
/// differences for every parameter entry.
pub fn gradient_check(
    g: &DirectedGraph,
    params: &ModelParams,
    hoods: &[SampledNeighborhood],
    neg: &[Edge],
    tied: bool,
    h: f64,
    floor: f64,
) -> GradCheck {
    let pos: Vec<Edge> = g.edges().collect();
    let loss = |p: &ModelParams| loss_and_gradients(p, hoods, &pos, neg, tied, None).unwrap().terms.loss;
    let out = loss_and_gradients(params, hoods, &pos, neg, tied, None).unwrap();
    let n = params.num_nodes();
    let mut analytic: Vec<Array2<f64>> = vec![out.grads.dense_source0(n), out.grads.dense_target0(n)];
    for (ws, wt) in &out.grads.layers {
        analytic.push(ws.clone());
        analytic.push(wt.clone());
    }

    fn group(p: &mut ModelParams, i: usize) -> &mut Array2<f64> {
        match i {
            0 => &mut p.source0,
            1 => &mut p.target0,
            i => {
                let l = &mut p.layers[(i - 2) / 2];
                if i % 2 == 0 {
                    &mut l.ws
                } else {
                    &mut l.wt
                }
            }
        }
    }

    let mut worst = 0.0f64;
    let mut entries = 0;
    let mut probe = params.clone();
    for (gi, a) in analytic.iter().enumerate() {
        for (idx, &av) in a.indexed_iter() {
            let orig = group(&mut probe, gi)[idx];
            group(&mut probe, gi)[idx] = orig + h;
            let up = loss(&probe);
            group(&mut probe, gi)[idx] = orig - h;
            let down = loss(&probe);
            group(&mut probe, gi)[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(av, numeric, floor));
            entries += 1;
        }
    }
    GradCheck {
        max_rel_err: worst,
        entries,
    }
}

/// Draws random parameters, resampling until no pre-activation lies within
/// `margin` of zero (ReLU's kink), so a step of `h` cannot cross it.
pub fn params_clear_of_kinks(
    g: &DirectedGraph,
    hoods: &[SampledNeighborhood],
    d: usize,
    mode: AggregationMode,
    activation: Activation,
    margin: f64,
    rng: &mut Rng,
) -> ModelParams {
    let n = g.num_nodes();
    let all: Vec<NodeId> = (0..n as NodeId).collect();
    loop {
        let p = random_params(n, d, hoods.len(), mode, activation, 1.0, rng);
        if activation != Activation::Relu {
            return p;
        }
        let cache = forward_rows(&p, hoods, &all, &all).unwrap();
        if cache.min_abs_preactivation() > margin {
            return p;
        }
    }
}

pub fn training_negatives(g: &DirectedGraph, rng: &mut Rng) -> Vec<Edge> {
    sample_training_negatives(g, 1, rng).all().collect()
}

/// Random DAG over a shuffled order plus a few backward "noise" edges; no
/// pair is ever connected in both directions.
pub fn dag_plus_noise(n: usize, forward_p: f64, noise_p: f64, rng: &mut Rng) -> DirectedGraph {
    use rand::seq::SliceRandom;
    let mut order: Vec<NodeId> = (0..n as NodeId).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (order[i], order[j]);
            if rng.gen_bool(forward_p) {
                edges.push((a, b));
            } else if rng.gen_bool(noise_p) {
                edges.push((b, a));
            }
        }
    }
    DirectedGraph::from_edges(n, &edges).0
}
