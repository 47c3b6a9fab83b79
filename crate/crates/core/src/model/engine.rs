//! Layered forward pass over a subset of output rows, with a cache that the
//! matching backward pass consumes.
//!
//! Only the rows needed to produce the requested outputs are computed: layer
//! `l - 1` holds the requested layer-`l` nodes, their cross-side partners (in
//! collaborative modes) and their sampled neighbors.

use ndarray::{s, Array2, ArrayView1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::NodeId;

use super::{DualEmbedding, ModelParams, SampledNeighborhood};

const ABSENT: u32 = u32::MAX;

/// Computed rows of one side at one layer.
#[derive(Debug, Clone)]
struct SideCache {
    input: Array2<f64>,
    /// Inverted-dropout multipliers applied to `input`.
    mask: Option<Array2<f64>>,
    pre: Array2<f64>,
    out: Array2<f64>,
}

#[derive(Debug, Clone)]
struct RowSet {
    nodes: Vec<NodeId>,
    pos: Vec<u32>,
}

impl RowSet {
    fn new(mut nodes: Vec<NodeId>, n: usize) -> Self {
        nodes.sort_unstable();
        nodes.dedup();
        let mut pos = vec![ABSENT; n];
        for (i, &v) in nodes.iter().enumerate() {
            pos[v as usize] = i as u32;
        }
        RowSet { nodes, pos }
    }

    fn at(&self, v: NodeId) -> usize {
        let p = self.pos[v as usize];
        debug_assert_ne!(p, ABSENT, "row {v} not planned");
        p as usize
    }
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Row sets per layer `0..=L`, source side then target side.
    src_rows: Vec<RowSet>,
    tgt_rows: Vec<RowSet>,
    /// Layers `1..=L`.
    src_layers: Vec<SideCache>,
    tgt_layers: Vec<SideCache>,
}

impl ForwardCache {
    /// Output source rows, aligned with [`ForwardCache::source_nodes`].
    pub fn source_out(&self) -> &Array2<f64> {
        &self.src_layers.last().expect("at least one layer").out
    }

    pub fn target_out(&self) -> &Array2<f64> {
        &self.tgt_layers.last().expect("at least one layer").out
    }

    /// Sorted, deduplicated nodes whose final source embedding was computed.
    pub fn source_nodes(&self) -> &[NodeId] {
        &self.src_rows.last().expect("at least one layer").nodes
    }

    pub fn target_nodes(&self) -> &[NodeId] {
        &self.tgt_rows.last().expect("at least one layer").nodes
    }

    /// Row of node `v` in [`ForwardCache::source_out`].
    /// Smallest `|pre-activation|` anywhere in the pass; finite-difference
    /// checks use it to stay clear of activation kinks.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.src_layers
            .iter()
            .chain(&self.tgt_layers)
            .flat_map(|c| c.pre.iter())
            .fold(f64::INFINITY, |m, x| m.min(x.abs()))
    }

    pub fn source_row(&self, v: NodeId) -> usize {
        self.src_rows.last().expect("at least one layer").at(v)
    }

    pub fn target_row(&self, v: NodeId) -> usize {
        self.tgt_rows.last().expect("at least one layer").at(v)
    }
}

/// Gradients with the layer-0 tables kept sparse: only rows read by the
/// forward pass are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub source_rows: Vec<NodeId>,
    pub source0: Array2<f64>,
    pub target_rows: Vec<NodeId>,
    pub target0: Array2<f64>,
    /// Per layer `(d ws, d wt)`.
    pub layers: Vec<(Array2<f64>, Array2<f64>)>,
}

impl Gradients {
    pub fn dense_source0(&self, n: usize) -> Array2<f64> {
        scatter_dense(&self.source_rows, &self.source0, n)
    }

    pub fn dense_target0(&self, n: usize) -> Array2<f64> {
        scatter_dense(&self.target_rows, &self.target0, n)
    }

    pub fn squared_norm(&self) -> f64 {
        let sq = |a: &Array2<f64>| a.iter().map(|x| x * x).sum::<f64>();
        sq(&self.source0)
            + sq(&self.target0)
            + self.layers.iter().map(|(a, b)| sq(a) + sq(b)).sum::<f64>()
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        let bad = |a: &Array2<f64>| a.iter().any(|x| !x.is_finite());
        if bad(&self.source0) {
            Some("source table")
        } else if bad(&self.target0) {
            Some("target table")
        } else if self.layers.iter().any(|(a, _)| bad(a)) {
            Some("source weights")
        } else if self.layers.iter().any(|(_, b)| bad(b)) {
            Some("target weights")
        } else {
            None
        }
    }
}

fn scatter_dense(rows: &[NodeId], values: &Array2<f64>, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, values.ncols()));
    for (i, &v) in rows.iter().enumerate() {
        out.row_mut(v as usize).assign(&values.row(i));
    }
    out
}

fn check_shapes(params: &ModelParams, hoods: &[SampledNeighborhood]) -> Result<()> {
    if hoods.len() != params.num_layers() {
        return Err(Error::Dimension(format!(
            "{} neighborhoods for {} layers",
            hoods.len(),
            params.num_layers()
        )));
    }
    let n = params.num_nodes();
    if let Some(h) = hoods.iter().find(|h| h.num_nodes() != n) {
        return Err(Error::Dimension(format!(
            "neighborhood covers {} nodes, model has {n}",
            h.num_nodes()
        )));
    }
    let d = params.dim();
    let want = (params.mode.input_blocks() * d, d);
    if params.target0.dim() != params.source0.dim() {
        return Err(Error::Dimension("source and target tables differ in shape".into()));
    }
    for (i, l) in params.layers.iter().enumerate() {
        if l.ws.dim() != want || l.wt.dim() != want {
            return Err(Error::Dimension(format!(
                "layer {i} weights {:?}, mode {} expects {want:?}",
                l.ws.dim(),
                params.mode
            )));
        }
    }
    Ok(())
}

/// Inverted dropout on layer inputs, training only.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut crate::rng::Rng,
}

/// Runs the forward pass producing final source embeddings for `src_nodes`
/// and final target embeddings for `tgt_nodes`. `hoods[l]` feeds layer `l+1`.
pub fn forward_rows(
    params: &ModelParams,
    hoods: &[SampledNeighborhood],
    src_nodes: &[NodeId],
    tgt_nodes: &[NodeId],
) -> Result<ForwardCache> {
    forward_rows_with_dropout(params, hoods, src_nodes, tgt_nodes, None)
}

pub fn forward_rows_with_dropout(
    params: &ModelParams,
    hoods: &[SampledNeighborhood],
    src_nodes: &[NodeId],
    tgt_nodes: &[NodeId],
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<ForwardCache> {
    check_shapes(params, hoods)?;
    if let Some(dr) = &dropout {
        if !(0.0..1.0).contains(&dr.rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {} outside [0, 1)", dr.rate)));
        }
    }
    let n = params.num_nodes();
    let depth = params.num_layers();
    let collab = params.mode.collaborative();

    // Plan row sets top-down.
    let mut src_rows = vec![RowSet::new(src_nodes.to_vec(), n)];
    let mut tgt_rows = vec![RowSet::new(tgt_nodes.to_vec(), n)];
    for hood in hoods.iter().rev() {
        let (s_top, t_top) = (&src_rows[0].nodes, &tgt_rows[0].nodes);
        let mut s_prev = s_top.clone();
        let mut t_prev = t_top.clone();
        if collab {
            s_prev.extend_from_slice(t_top);
            t_prev.extend_from_slice(s_top);
        }
        for &v in s_top {
            s_prev.extend_from_slice(hood.src(v));
        }
        for &v in t_top {
            t_prev.extend_from_slice(hood.tgt(v));
        }
        src_rows.insert(0, RowSet::new(s_prev, n));
        tgt_rows.insert(0, RowSet::new(t_prev, n));
    }

    let mut src_layers: Vec<SideCache> = Vec::with_capacity(depth);
    let mut tgt_layers: Vec<SideCache> = Vec::with_capacity(depth);
    for l in 1..=depth {
        let hood = &hoods[l - 1];
        let weights = &params.layers[l - 1];
        let (prev_s, prev_t) = if l == 1 {
            (TableRows::Table(&params.source0), TableRows::Table(&params.target0))
        } else {
            (
                TableRows::Rows(&src_layers[l - 2].out, &src_rows[l - 1]),
                TableRows::Rows(&tgt_layers[l - 2].out, &tgt_rows[l - 1]),
            )
        };
        let s_input = layer_input(&src_rows[l].nodes, &prev_s, &prev_t, collab, |v| hood.src(v));
        let t_input = layer_input(&tgt_rows[l].nodes, &prev_t, &prev_s, collab, |v| hood.tgt(v));
        src_layers.push(activate(s_input, &weights.ws, params, dropout.as_deref_mut()));
        tgt_layers.push(activate(t_input, &weights.wt, params, dropout.as_deref_mut()));
    }

    Ok(ForwardCache {
        src_rows,
        tgt_rows,
        src_layers,
        tgt_layers,
    })
}

enum TableRows<'a> {
    Table(&'a Array2<f64>),
    Rows(&'a Array2<f64>, &'a RowSet),
}

impl TableRows<'_> {
    fn row(&self, v: NodeId) -> ArrayView1<'_, f64> {
        match self {
            TableRows::Table(t) => t.row(v as usize),
            TableRows::Rows(out, set) => out.row(set.at(v)),
        }
    }

    fn dim(&self) -> usize {
        match self {
            TableRows::Table(t) => t.ncols(),
            TableRows::Rows(out, _) => out.ncols(),
        }
    }
}

/// Rows `[own, cross (collaborative only), mean of neighbors' own-side]`.
fn layer_input<'a>(
    nodes: &[NodeId],
    own: &TableRows<'_>,
    cross: &TableRows<'_>,
    collab: bool,
    neighbors: impl Fn(NodeId) -> &'a [NodeId],
) -> Array2<f64> {
    let d = own.dim();
    let blocks = if collab { 3 } else { 2 };
    let mut input = Array2::zeros((nodes.len(), blocks * d));
    for (i, &v) in nodes.iter().enumerate() {
        let mut row = input.row_mut(i);
        row.slice_mut(s![0..d]).assign(&own.row(v));
        if collab {
            row.slice_mut(s![d..2 * d]).assign(&cross.row(v));
        }
        let nb = neighbors(v);
        if !nb.is_empty() {
            let mut agg = row.slice_mut(s![(blocks - 1) * d..]);
            for &u in nb {
                agg += &own.row(u);
            }
            agg /= nb.len() as f64;
        }
    }
    input
}

fn activate(
    mut input: Array2<f64>,
    w: &Array2<f64>,
    params: &ModelParams,
    dropout: Option<&mut Dropout<'_>>,
) -> SideCache {
    let mask = match dropout {
        Some(dr) if dr.rate > 0.0 => {
            let keep = 1.0 - dr.rate;
            let mask = Array2::from_shape_simple_fn(input.dim(), || {
                if dr.rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            });
            input *= &mask;
            Some(mask)
        }
        _ => None,
    };
    let pre = input.dot(w);
    let act = params.activation;
    let out = pre.mapv(|x| act.apply(x));
    SideCache {
        input,
        mask,
        pre,
        out,
    }
}

/// Final embeddings for all nodes.
pub fn forward(params: &ModelParams, hoods: &[SampledNeighborhood]) -> Result<DualEmbedding> {
    let all: Vec<NodeId> = (0..params.num_nodes() as NodeId).collect();
    let cache = forward_rows(params, hoods, &all, &all)?;
    let ForwardCache {
        mut src_layers,
        mut tgt_layers,
        ..
    } = cache;
    Ok(DualEmbedding {
        source: src_layers.pop().expect("at least one layer").out,
        target: tgt_layers.pop().expect("at least one layer").out,
    })
}

/// Backpropagates `d_source` (rows aligned with `cache.source_nodes()`) and
/// `d_target` through the cached forward pass.
pub fn backward(
    params: &ModelParams,
    hoods: &[SampledNeighborhood],
    cache: &ForwardCache,
    d_source: Array2<f64>,
    d_target: Array2<f64>,
) -> Gradients {
    let depth = params.num_layers();
    let d = params.dim();
    let collab = params.mode.collaborative();
    let blocks = params.mode.input_blocks();
    let act = params.activation;

    let mut layer_grads = Vec::with_capacity(depth);
    let mut d_out_s = d_source;
    let mut d_out_t = d_target;
    for l in (1..=depth).rev() {
        let hood = &hoods[l - 1];
        let weights = &params.layers[l - 1];
        let (sc, tc) = (&cache.src_layers[l - 1], &cache.tgt_layers[l - 1]);

        let pre_grad = |d_out: &mut Array2<f64>, side: &SideCache| {
            ndarray::Zip::from(d_out)
                .and(&side.pre)
                .and(&side.out)
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));
        };
        pre_grad(&mut d_out_s, sc);
        pre_grad(&mut d_out_t, tc);
        let d_ws = sc.input.t().dot(&d_out_s);
        let d_wt = tc.input.t().dot(&d_out_t);
        let mut d_in_s = d_out_s.dot(&weights.ws.t());
        let mut d_in_t = d_out_t.dot(&weights.wt.t());
        if let Some(mask) = &sc.mask {
            d_in_s *= mask;
        }
        if let Some(mask) = &tc.mask {
            d_in_t *= mask;
        }
        layer_grads.push((d_ws, d_wt));

        let (prev_s_rows, prev_t_rows) = (&cache.src_rows[l - 1], &cache.tgt_rows[l - 1]);
        let mut d_prev_s = Array2::<f64>::zeros((prev_s_rows.nodes.len(), d));
        let mut d_prev_t = Array2::<f64>::zeros((prev_t_rows.nodes.len(), d));

        scatter_input(
            &cache.src_rows[l].nodes,
            &d_in_s,
            d,
            blocks,
            collab,
            |v| hood.src(v),
            (&mut d_prev_s, prev_s_rows),
            (&mut d_prev_t, prev_t_rows),
        );
        scatter_input(
            &cache.tgt_rows[l].nodes,
            &d_in_t,
            d,
            blocks,
            collab,
            |v| hood.tgt(v),
            (&mut d_prev_t, prev_t_rows),
            (&mut d_prev_s, prev_s_rows),
        );
        d_out_s = d_prev_s;
        d_out_t = d_prev_t;
    }
    layer_grads.reverse();

    Gradients {
        source_rows: cache.src_rows[0].nodes.clone(),
        source0: d_out_s,
        target_rows: cache.tgt_rows[0].nodes.clone(),
        target0: d_out_t,
        layers: layer_grads,
    }
}

#[allow(clippy::too_many_arguments)]
fn scatter_input<'a>(
    nodes: &[NodeId],
    d_input: &Array2<f64>,
    d: usize,
    blocks: usize,
    collab: bool,
    neighbors: impl Fn(NodeId) -> &'a [NodeId],
    own: (&mut Array2<f64>, &RowSet),
    cross: (&mut Array2<f64>, &RowSet),
) {
    let (d_own, own_rows) = own;
    let (d_cross, cross_rows) = cross;
    for (i, &v) in nodes.iter().enumerate() {
        let row = d_input.row(i);
        {
            let mut target = d_own.row_mut(own_rows.at(v));
            target += &row.slice(s![0..d]);
        }
        if collab {
            let mut target = d_cross.row_mut(cross_rows.at(v));
            target += &row.slice(s![d..2 * d]);
        }
        let nb = neighbors(v);
        if !nb.is_empty() {
            let share = row.slice(s![(blocks - 1) * d..]).mapv(|x| x / nb.len() as f64);
            for &u in nb {
                let mut target = d_own.row_mut(own_rows.at(u));
                target += &share;
            }
        }
    }
}
