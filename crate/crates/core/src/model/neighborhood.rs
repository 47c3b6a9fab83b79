use ndarray::{Array1, ArrayView1};

use crate::graph::{DegreeIndex, DirectedGraph, NodeId};
use crate::sampler::sample_neighbors;

use super::AggregationMode;

/// Neighbor ids feeding one node's source-side and target-side aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborhoodRow {
    pub src: Vec<NodeId>,
    pub tgt: Vec<NodeId>,
    /// Source side drew from out-neighbors (zero in-degree fallback).
    pub src_reversed: bool,
    /// Target side drew from in-neighbors (zero out-degree fallback).
    pub tgt_reversed: bool,
}

/// Chooses the neighbor pools for `v` and samples `k` from each, or keeps the
/// whole pool when `k` is `None`.
///
/// Source side: in-neighbors, or out-neighbors when `v` has no in-edges and
/// reverse aggregation is on. Target side: out-neighbors, or in-neighbors when
/// `v` has no out-edges and reverse aggregation is on.
pub fn select_neighborhood<R: rand::Rng + ?Sized>(
    v: NodeId,
    g: &DirectedGraph,
    idx: &DegreeIndex,
    mode: AggregationMode,
    k: Option<usize>,
    rng: &mut R,
) -> NeighborhoodRow {
    let src_reversed = mode.reverse() && idx.is_zero_in(v);
    let tgt_reversed = mode.reverse() && idx.is_zero_out(v);
    let src_pool = if src_reversed { g.out_neighbors(v) } else { g.in_neighbors(v) };
    let tgt_pool = if tgt_reversed { g.in_neighbors(v) } else { g.out_neighbors(v) };
    let mut draw = |pool: &[NodeId]| match k {
        Some(k) => sample_neighbors(pool, k, rng),
        None => pool.to_vec(),
    };
    let src = draw(src_pool);
    let tgt = draw(tgt_pool);
    NeighborhoodRow {
        src,
        tgt,
        src_reversed,
        tgt_reversed,
    }
}

/// Neighborhood rows for every node, stored flat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledNeighborhood {
    src_offsets: Vec<usize>,
    src_ids: Vec<NodeId>,
    tgt_offsets: Vec<usize>,
    tgt_ids: Vec<NodeId>,
    src_reversed: Vec<bool>,
    tgt_reversed: Vec<bool>,
}

impl SampledNeighborhood {
    pub fn from_rows(rows: impl IntoIterator<Item = NeighborhoodRow>) -> Self {
        let mut out = SampledNeighborhood {
            src_offsets: vec![0],
            src_ids: Vec::new(),
            tgt_offsets: vec![0],
            tgt_ids: Vec::new(),
            src_reversed: Vec::new(),
            tgt_reversed: Vec::new(),
        };
        for row in rows {
            out.src_ids.extend(row.src);
            out.src_offsets.push(out.src_ids.len());
            out.tgt_ids.extend(row.tgt);
            out.tgt_offsets.push(out.tgt_ids.len());
            out.src_reversed.push(row.src_reversed);
            out.tgt_reversed.push(row.tgt_reversed);
        }
        out
    }

    /// `k` sampled neighbors per side for every node.
    pub fn sample<R: rand::Rng + ?Sized>(
        g: &DirectedGraph,
        idx: &DegreeIndex,
        mode: AggregationMode,
        k: usize,
        rng: &mut R,
    ) -> Self {
        Self::from_rows(
            (0..g.num_nodes() as NodeId)
                .map(|v| select_neighborhood(v, g, idx, mode, Some(k), rng))
                .collect::<Vec<_>>(),
        )
    }

    /// Whole neighbor pools, no sampling.
    pub fn full(g: &DirectedGraph, idx: &DegreeIndex, mode: AggregationMode) -> Self {
        let mut unused = rand::rngs::mock::StepRng::new(0, 0);
        Self::from_rows(
            (0..g.num_nodes() as NodeId)
                .map(|v| select_neighborhood(v, g, idx, mode, None, &mut unused))
                .collect::<Vec<_>>(),
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.src_reversed.len()
    }

    pub fn src(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.src_ids[self.src_offsets[v]..self.src_offsets[v + 1]]
    }

    pub fn tgt(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.tgt_ids[self.tgt_offsets[v]..self.tgt_offsets[v + 1]]
    }

    pub fn src_reversed(&self, v: NodeId) -> bool {
        self.src_reversed[v as usize]
    }

    pub fn tgt_reversed(&self, v: NodeId) -> bool {
        self.tgt_reversed[v as usize]
    }
}

/// Elementwise mean; the zero vector of width `dim` when `vectors` is empty.
pub fn aggregate_mean<'a>(vectors: impl IntoIterator<Item = ArrayView1<'a, f64>>, dim: usize) -> Array1<f64> {
    let mut acc = Array1::<f64>::zeros(dim);
    let mut count = 0usize;
    for v in vectors {
        acc += &v;
        count += 1;
    }
    if count > 0 {
        acc /= count as f64;
    }
    acc
}
