//! Edge splits, evaluation negatives, neighbor samples and training negatives.

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, Edge, NodeId};
use crate::rng;

/// `floor(fraction * total + 0.5)`.
pub fn rounded_count(total: usize, fraction: f64) -> usize {
    (fraction * total as f64 + 0.5).floor() as usize
}

/// Train graph plus held-out positive test edges.
#[derive(Debug, Clone)]
pub struct EdgeSplit {
    pub train: DirectedGraph,
    /// Held-out edges, ascending.
    pub test_pos: Vec<Edge>,
    pub test_fraction: f64,
    pub seed: u64,
}

/// Uniform random edge split. The train graph keeps every node of `g`.
pub fn split_edges(g: &DirectedGraph, test_fraction: f64, seed: u64) -> Result<EdgeSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let m = g.num_edges();
    let n_test = rounded_count(m, test_fraction);
    if n_test == 0 || n_test >= m {
        return Err(Error::DegenerateSplit {
            train: m.saturating_sub(n_test),
            test: n_test.min(m),
        });
    }
    let mut edges: Vec<Edge> = g.edges().collect();
    let mut rng = rng::stream(seed, "split");
    edges.shuffle(&mut rng);
    let mut test_pos = edges[..n_test].to_vec();
    test_pos.sort_unstable();
    let train = g.with_same_nodes(&edges[n_test..]);
    Ok(EdgeSplit {
        train,
        test_pos,
        test_fraction,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NegativeKind {
    /// Uniform non-edge.
    Random,
    /// Flipped unidirectional test positive.
    Reversed,
}

impl NegativeKind {
    pub fn tag(self) -> char {
        match self {
            NegativeKind::Random => 'r',
            NegativeKind::Reversed => 'x',
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "r" => Some(NegativeKind::Random),
            "x" => Some(NegativeKind::Reversed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TestNegative {
    pub edge: Edge,
    pub kind: NegativeKind,
}

/// Test negatives for one mix ratio. `edges.len()` equals the positive count.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalNegatives {
    pub mix_ratio: f64,
    pub seed: u64,
    pub edges: Vec<TestNegative>,
}

impl EvalNegatives {
    pub fn count(&self, kind: NegativeKind) -> usize {
        self.edges.iter().filter(|n| n.kind == kind).count()
    }
}

/// A complete link-prediction evaluation split.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub split: EdgeSplit,
    pub negatives: EvalNegatives,
}

/// Builds test negatives: `round(mix_ratio * |test_pos|)` reversals of
/// unidirectional test positives, the rest uniform non-edges of `full`.
/// Negatives are distinct from each other.
pub fn build_eval_negatives(
    full: &DirectedGraph,
    split: &EdgeSplit,
    mix_ratio: f64,
    seed: u64,
) -> Result<EvalNegatives> {
    if !(0.0..=1.0).contains(&mix_ratio) {
        return Err(Error::InvalidArgument(format!(
            "mix ratio must lie in [0, 1], got {mix_ratio}"
        )));
    }
    let n_pos = split.test_pos.len();
    let n_rev = rounded_count(n_pos, mix_ratio);
    let unidirectional: Vec<Edge> = split
        .test_pos
        .iter()
        .copied()
        .filter(|&(u, v)| !full.has_edge(v, u))
        .collect();
    if unidirectional.len() < n_rev {
        return Err(Error::InsufficientUnidirectional {
            requested: n_rev,
            available: unidirectional.len(),
            max_ratio: unidirectional.len() as f64 / n_pos.max(1) as f64,
        });
    }
    let n_rand = n_pos - n_rev;
    let n = full.num_nodes() as u64;
    let non_edges = (n * n.saturating_sub(1)).saturating_sub(full.num_edges() as u64);
    // Reversed negatives are themselves non-edges and occupy part of the pool.
    if (non_edges as usize) < n_pos {
        return Err(Error::InsufficientNonEdges {
            requested: n_pos,
            available: non_edges as usize,
        });
    }

    let mut rng = rng::stream(seed, &format!("eval-negatives/{mix_ratio}"));
    let mut out = Vec::with_capacity(n_pos);
    let mut seen: HashSet<Edge> = HashSet::with_capacity(n_pos);
    let mut picks = index::sample(&mut rng, unidirectional.len(), n_rev).into_vec();
    picks.sort_unstable();
    for i in picks {
        let (u, v) = unidirectional[i];
        seen.insert((v, u));
        out.push(TestNegative {
            edge: (v, u),
            kind: NegativeKind::Reversed,
        });
    }
    while out.len() < n_rev + n_rand {
        let u = rng.gen_range(0..n) as NodeId;
        let v = rng.gen_range(0..n) as NodeId;
        if u == v || full.has_edge(u, v) || !seen.insert((u, v)) {
            continue;
        }
        out.push(TestNegative {
            edge: (u, v),
            kind: NegativeKind::Random,
        });
    }
    Ok(EvalNegatives {
        mix_ratio,
        seed,
        edges: out,
    })
}

/// Fixed-size neighbor sample.
///
/// `k` distinct ids when at least `k` are available, `k` draws with
/// replacement when fewer, empty when `neighbors` is empty.
pub fn sample_neighbors<R: Rng + ?Sized>(neighbors: &[NodeId], k: usize, rng: &mut R) -> Vec<NodeId> {
    assert!(k >= 1, "neighbor sample size must be at least 1");
    match neighbors.len() {
        0 => Vec::new(),
        len if len >= k => index::sample(rng, len, k)
            .into_iter()
            .map(|i| neighbors[i])
            .collect(),
        len => (0..k).map(|_| neighbors[rng.gen_range(0..len)]).collect(),
    }
}

/// Per-epoch training negatives.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NegativeBatch {
    /// `(u, v)` with `u` not pointing to `v`, `n` per node `v`.
    pub src_neg: Vec<Edge>,
    /// `(v, w)` with `v` not pointing to `w`, `n` per node `v`.
    pub tgt_neg: Vec<Edge>,
    /// Nodes whose source-side draws hit the retry cap.
    pub skipped_src: Vec<NodeId>,
    pub skipped_tgt: Vec<NodeId>,
}

impl NegativeBatch {
    pub fn all(&self) -> impl Iterator<Item = Edge> + '_ {
        self.src_neg.iter().chain(self.tgt_neg.iter()).copied()
    }

    pub fn len(&self) -> usize {
        self.src_neg.len() + self.tgt_neg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Rejection attempts per draw before a node is skipped.
pub const NEGATIVE_RETRY_CAP: usize = 256;

pub fn sample_training_negatives<R: Rng + ?Sized>(
    g: &DirectedGraph,
    n: usize,
    rng: &mut R,
) -> NegativeBatch {
    assert!(n >= 1, "negatives per node must be at least 1");
    let num_nodes = g.num_nodes();
    let mut batch = NegativeBatch::default();
    if num_nodes < 2 {
        return batch;
    }
    let draw = |rng: &mut R, reject: &dyn Fn(NodeId) -> bool| -> Option<NodeId> {
        (0..NEGATIVE_RETRY_CAP)
            .map(|_| rng.gen_range(0..num_nodes) as NodeId)
            .find(|&u| !reject(u))
    };
    for v in 0..num_nodes as NodeId {
        let mut ok = true;
        for _ in 0..n {
            match draw(rng, &|u| u == v || g.has_edge(u, v)) {
                Some(u) => batch.src_neg.push((u, v)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            log::warn!("node {v}: no source-side negative within {NEGATIVE_RETRY_CAP} draws");
            batch.skipped_src.push(v);
        }
        ok = true;
        for _ in 0..n {
            match draw(rng, &|w| w == v || g.has_edge(v, w)) {
                Some(w) => batch.tgt_neg.push((v, w)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            log::warn!("node {v}: no target-side negative within {NEGATIVE_RETRY_CAP} draws");
            batch.skipped_tgt.push(v);
        }
    }
    batch
}
