//! Directed graph storage with dual (in/out) CSR adjacency.
//!
//! Nodes are densely relabelled `0..N` in first-appearance order; the original
//! string identifiers are kept so outputs can be mapped back. Both adjacency
//! directions are sorted, so edge membership is a binary search.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense node index.
pub type NodeId = u32;

/// A directed edge `(src, dst)` over dense ids.
pub type Edge = (NodeId, NodeId);

/// Counters reported when a graph is built from raw edge records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct LoadSummary {
    pub records: usize,
    pub duplicates: usize,
    pub self_loops: usize,
}

/// Immutable directed graph with out- and in-adjacency in CSR form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    in_offsets: Vec<usize>,
    in_sources: Vec<NodeId>,
    external_ids: Vec<String>,
}

impl DirectedGraph {
    /// Builds a graph over `num_nodes` dense nodes named `0..N`.
    ///
    /// Self-loops and duplicate edges are dropped and counted in the returned
    /// summary. Panics if an endpoint is out of range.
    pub fn from_edges(num_nodes: usize, edges: &[Edge]) -> (Self, LoadSummary) {
        let ids = (0..num_nodes).map(|i| i.to_string()).collect();
        Self::with_external_ids(ids, edges)
    }

    /// Builds a graph whose node `i` carries the external name `external_ids[i]`.
    pub fn with_external_ids(external_ids: Vec<String>, edges: &[Edge]) -> (Self, LoadSummary) {
        let n = external_ids.len();
        let mut summary = LoadSummary {
            records: edges.len(),
            ..Default::default()
        };
        let mut clean: Vec<Edge> = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            assert!(
                (u as usize) < n && (v as usize) < n,
                "edge ({u}, {v}) out of range for {n} nodes"
            );
            if u == v {
                summary.self_loops += 1;
            } else {
                clean.push((u, v));
            }
        }
        clean.sort_unstable();
        let before = clean.len();
        clean.dedup();
        summary.duplicates = before - clean.len();

        let (out_offsets, out_targets) = build_csr(n, clean.iter().copied());
        let mut reversed: Vec<Edge> = clean.iter().map(|&(u, v)| (v, u)).collect();
        reversed.sort_unstable();
        let (in_offsets, in_sources) = build_csr(n, reversed.into_iter());

        (
            Self {
                out_offsets,
                out_targets,
                in_offsets,
                in_sources,
                external_ids,
            },
            summary,
        )
    }

    pub fn num_nodes(&self) -> usize {
        self.external_ids.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out_targets.len()
    }

    /// Target neighbors of `v`: nodes `u` with an edge `v -> u`.
    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    /// Source neighbors of `v`: nodes `u` with an edge `u -> v`.
    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out_neighbors(v).len()
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_neighbors(v).len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.out_neighbors(u).binary_search(&v).is_ok()
    }

    /// All edges in ascending `(src, dst)` order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        (0..self.num_nodes() as NodeId)
            .flat_map(move |u| self.out_neighbors(u).iter().map(move |&v| (u, v)))
    }

    pub fn external_id(&self, v: NodeId) -> &str {
        &self.external_ids[v as usize]
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external_ids
    }

    /// Reverse lookup table from external id to dense id.
    pub fn id_map(&self) -> HashMap<&str, NodeId> {
        self.external_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as NodeId))
            .collect()
    }

    /// Same node set (and external ids), different edges.
    pub fn with_same_nodes(&self, edges: &[Edge]) -> Self {
        Self::with_external_ids(self.external_ids.clone(), edges).0
    }

    /// Writes `src dst` lines using external ids.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (u, v) in self.edges() {
            writeln!(w, "{} {}", self.external_id(u), self.external_id(v))?;
        }
        Ok(())
    }
}

fn build_csr(n: usize, sorted: impl Iterator<Item = Edge>) -> (Vec<usize>, Vec<NodeId>) {
    let mut offsets = vec![0usize; n + 1];
    let mut ids = Vec::new();
    for (u, v) in sorted {
        offsets[u as usize + 1] += 1;
        ids.push(v);
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    (offsets, ids)
}

/// Zero in-degree and zero out-degree node sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegreeIndex {
    pub zero_in: Vec<NodeId>,
    pub zero_out: Vec<NodeId>,
    is_zero_in: Vec<bool>,
    is_zero_out: Vec<bool>,
}

impl DegreeIndex {
    pub fn is_zero_in(&self, v: NodeId) -> bool {
        self.is_zero_in[v as usize]
    }

    pub fn is_zero_out(&self, v: NodeId) -> bool {
        self.is_zero_out[v as usize]
    }

    pub fn zero_in_fraction(&self) -> f64 {
        self.zero_in.len() as f64 / self.is_zero_in.len().max(1) as f64
    }

    pub fn zero_out_fraction(&self) -> f64 {
        self.zero_out.len() as f64 / self.is_zero_out.len().max(1) as f64
    }
}

pub fn degree_index(g: &DirectedGraph) -> DegreeIndex {
    let n = g.num_nodes();
    let is_zero_in: Vec<bool> = (0..n as NodeId).map(|v| g.in_degree(v) == 0).collect();
    let is_zero_out: Vec<bool> = (0..n as NodeId).map(|v| g.out_degree(v) == 0).collect();
    let collect = |mask: &[bool]| {
        mask.iter()
            .enumerate()
            .filter(|(_, &z)| z)
            .map(|(i, _)| i as NodeId)
            .collect()
    };
    DegreeIndex {
        zero_in: collect(&is_zero_in),
        zero_out: collect(&is_zero_out),
        is_zero_in,
        is_zero_out,
    }
}

fn is_comment(line: &str) -> bool {
    line.starts_with('#') || line.starts_with('%')
}

/// Parses an edge list: one `src dst` pair per line, `#`/`%` comments.
///
/// Extra columns after the first two are ignored (KONECT files carry weights
/// and timestamps there).
pub fn read_edge_list<R: Read>(reader: R) -> Result<(DirectedGraph, LoadSummary)> {
    let mut ids: Vec<String> = Vec::new();
    let mut lookup: HashMap<String, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |name: &str| -> NodeId {
        if let Some(&id) = lookup.get(name) {
            return id;
        }
        let id = ids.len() as NodeId;
        ids.push(name.to_owned());
        lookup.insert(name.to_owned(), id);
        id
    };
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_comment(trimmed) {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(src), Some(dst)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `src dst`, got {trimmed:?}"),
            });
        };
        let u = intern(src);
        let v = intern(dst);
        edges.push((u, v));
    }
    let (g, summary) = DirectedGraph::with_external_ids(ids, &edges);
    if g.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok((g, summary))
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<(DirectedGraph, LoadSummary)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(file)
}

/// Reads edges over a fixed node set; unknown ids are an error.
pub fn read_edges_with_nodes<R: Read>(reader: R, nodes: &DirectedGraph) -> Result<Vec<Edge>> {
    let map = nodes.id_map();
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_comment(trimmed) {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(src), Some(dst)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `src dst`, got {trimmed:?}"),
            });
        };
        let resolve = |name: &str| {
            map.get(name).copied().ok_or_else(|| Error::Parse {
                line: lineno + 1,
                message: format!("unknown node id {name:?}"),
            })
        };
        edges.push((resolve(src)?, resolve(dst)?));
    }
    Ok(edges)
}

/// Writes one external id per line in dense order.
pub fn write_node_ids<W: Write>(g: &DirectedGraph, w: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    for id in g.external_ids() {
        writeln!(w, "{id}")?;
    }
    w.flush()
}

pub fn read_node_ids<R: Read>(reader: R) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            ids.push(t.to_owned());
        }
    }
    Ok(ids)
}

/// Per-node class labels aligned to dense ids. Unlabeled nodes are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    pub labels: Vec<Option<u32>>,
    pub num_classes: usize,
    /// Original label strings, indexed by class id.
    pub class_names: Vec<String>,
}

impl NodeLabels {
    pub fn labeled_nodes(&self) -> impl Iterator<Item = (NodeId, u32)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(v, l)| l.map(|c| (v as NodeId, c)))
    }
}

/// Parses `node label` lines. Class ids are assigned in sorted order of the
/// label strings so they do not depend on file order.
pub fn read_labels<R: Read>(reader: R, g: &DirectedGraph) -> Result<NodeLabels> {
    let map = g.id_map();
    let mut raw: Vec<(NodeId, String)> = Vec::new();
    let mut unknown = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_comment(trimmed) {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let (Some(node), Some(label)) = (fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected `node label`, got {trimmed:?}"),
            });
        };
        match map.get(node) {
            Some(&v) => raw.push((v, label.to_owned())),
            None => unknown.push(node.to_owned()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownNodes(unknown));
    }
    let mut class_names: Vec<String> = raw.iter().map(|(_, l)| l.clone()).collect();
    class_names.sort();
    class_names.dedup();
    if class_names.len() < 2 {
        return Err(Error::TooFewClasses(class_names.len()));
    }
    let class_of: HashMap<&str, u32> = class_names
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i as u32))
        .collect();
    let mut labels = vec![None; g.num_nodes()];
    for (v, l) in &raw {
        labels[*v as usize] = Some(class_of[l.as_str()]);
    }
    Ok(NodeLabels {
        labels,
        num_classes: class_names.len(),
        class_names,
    })
}

pub fn load_labels(path: impl AsRef<Path>, g: &DirectedGraph) -> Result<NodeLabels> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file, g)
}

/// Dense `N x F` node attribute table, rows in dense id order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureTable {
    pub fn row(&self, v: usize) -> &[f64] {
        &self.data[v * self.cols..(v + 1) * self.cols]
    }
}

/// Parses `node f1 f2 ... fF` lines. Every node of `g` must appear once.
pub fn read_features<R: Read>(reader: R, g: &DirectedGraph) -> Result<FeatureTable> {
    let map = g.id_map();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; g.num_nodes()];
    let mut cols = None;
    let mut unknown = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || is_comment(trimmed) {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let node = fields.next().unwrap_or_default();
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        if *cols.get_or_insert(values.len()) != values.len() || values.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected {} feature columns", cols.unwrap_or(0)),
            });
        }
        match map.get(node) {
            Some(&v) => rows[v as usize] = Some(values),
            None => unknown.push(node.to_owned()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownNodes(unknown));
    }
    let cols = cols.ok_or(Error::EmptyGraph)?;
    let mut data = Vec::with_capacity(rows.len() * cols);
    for (v, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| Error::MissingFeatures(g.external_id(v as NodeId).to_owned()))?;
        data.extend(row);
    }
    Ok(FeatureTable {
        rows: g.num_nodes(),
        cols,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<(DirectedGraph, LoadSummary)> {
        read_edge_list(text.as_bytes())
    }

    #[test]
    fn duplicates_collapse() {
        let (g, s) = parse("0 1\n1 2\n0 1\n").unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.out_neighbors(0), &[1]);
        assert_eq!(s.duplicates, 1);
    }

    #[test]
    fn string_ids_both_directions() {
        let (g, _) = parse("a b\nb a\n").unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 0));
        assert_eq!(g.external_id(0), "a");
    }

    #[test]
    fn comments_and_self_loops() {
        let (g, s) = parse("% konect header\n# c\n1 1\n1 2 1 1234\n").unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(s.self_loops, 1);
        assert_eq!(g.num_nodes(), 2);
    }

    #[test]
    fn malformed_line_reports_number() {
        match parse("0 1\n2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_graph_rejected() {
        assert!(matches!(parse("# nothing\n"), Err(Error::EmptyGraph)));
        assert!(matches!(parse("3 3\n"), Err(Error::EmptyGraph)));
    }

    #[test]
    fn chain_degree_index() {
        let (g, _) = DirectedGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let idx = degree_index(&g);
        assert_eq!(idx.zero_in, vec![0]);
        assert_eq!(idx.zero_out, vec![2]);
    }

    #[test]
    fn labels_map_through_external_ids() {
        let (g, _) = parse("x y\ny z\n").unwrap();
        let labels = read_labels("x A\ny A\nz B\n".as_bytes(), &g).unwrap();
        assert_eq!(labels.num_classes, 2);
        assert_eq!(labels.labels, vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn labels_unknown_nodes_listed() {
        let (g, _) = parse("x y\n").unwrap();
        match read_labels("x A\nq B\nr B\n".as_bytes(), &g) {
            Err(Error::UnknownNodes(v)) => assert_eq!(v, vec!["q", "r"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_need_two_classes() {
        let (g, _) = parse("x y\n").unwrap();
        assert!(matches!(
            read_labels("x A\ny A\n".as_bytes(), &g),
            Err(Error::TooFewClasses(1))
        ));
    }

    #[test]
    fn unlabeled_nodes_are_none() {
        let (g, _) = parse("x y\ny z\n").unwrap();
        let labels = read_labels("x A\nz B\n".as_bytes(), &g).unwrap();
        assert_eq!(labels.labels[1], None);
        assert_eq!(labels.labeled_nodes().count(), 2);
    }

    #[test]
    fn features_aligned() {
        let (g, _) = parse("x y\n").unwrap();
        let f = read_features("y 3 4\nx 1 2\n".as_bytes(), &g).unwrap();
        assert_eq!(f.row(0), &[1.0, 2.0]);
        assert_eq!(f.row(1), &[3.0, 4.0]);
        assert!(read_features("x 1 2\n".as_bytes(), &g).is_err());
    }

    fn arb_edges() -> impl Strategy<Value = (usize, Vec<Edge>)> {
        (1usize..12).prop_flat_map(|n| {
            let e = (0..n as NodeId, 0..n as NodeId);
            (Just(n), proptest::collection::vec(e, 0..40))
        })
    }

    proptest! {
        #[test]
        fn adjacency_invariants((n, edges) in arb_edges()) {
            let (g, _) = DirectedGraph::from_edges(n, &edges);
            let out_sum: usize = (0..n as NodeId).map(|v| g.out_degree(v)).sum();
            let in_sum: usize = (0..n as NodeId).map(|v| g.in_degree(v)).sum();
            prop_assert_eq!(out_sum, g.num_edges());
            prop_assert_eq!(in_sum, g.num_edges());
            for v in 0..n as NodeId {
                prop_assert!(g.out_neighbors(v).windows(2).all(|w| w[0] < w[1]));
                prop_assert!(g.in_neighbors(v).windows(2).all(|w| w[0] < w[1]));
                for &u in g.out_neighbors(v) {
                    prop_assert!(u != v);
                    prop_assert!(g.in_neighbors(u).contains(&v));
                }
            }
            let idx = degree_index(&g);
            for v in 0..n as NodeId {
                prop_assert!(idx.is_zero_in(v) != (g.in_degree(v) > 0));
                prop_assert!(idx.is_zero_out(v) != (g.out_degree(v) > 0));
            }
        }

        #[test]
        fn membership_matches_linear_scan((n, edges) in arb_edges()) {
            let (g, _) = DirectedGraph::from_edges(n, &edges);
            for u in 0..n as NodeId {
                for v in 0..n as NodeId {
                    let scan = u != v && edges.contains(&(u, v));
                    prop_assert_eq!(g.has_edge(u, v), scan);
                }
            }
        }

        #[test]
        fn edge_list_round_trip((n, edges) in arb_edges()) {
            let (g, _) = DirectedGraph::from_edges(n, &edges);
            prop_assume!(g.num_edges() > 0);
            let mut buf = Vec::new();
            g.write_edge_list(&mut buf).unwrap();
            let (h, _) = read_edge_list(buf.as_slice()).unwrap();
            let map = g.id_map();
            let relabel = |v: NodeId| map[h.external_id(v)];
            let mut back: Vec<Edge> = h.edges().map(|(u, v)| (relabel(u), relabel(v))).collect();
            back.sort_unstable();
            prop_assert_eq!(back, g.edges().collect::<Vec<_>>());
        }
    }
}
