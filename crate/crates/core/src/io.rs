//! On-disk formats: embedding matrices, split directories, checkpoints and
//! loss logs.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{read_edges_with_nodes, read_node_ids, write_node_ids, DirectedGraph, Edge};
use crate::model::{Activation, AggregationMode, DualEmbedding, LayerWeights, ModelParams};
use crate::sampler::{EdgeSplit, EvalNegatives, NegativeKind, TestNegative};
use crate::training::{AdamState, Checkpoint, LossReport, TrainConfig};

const BINARY_MAGIC: &[u8; 8] = b"COBAEMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    #[default]
    Text,
    Binary,
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(MatrixFormat::Text),
            "binary" => Ok(MatrixFormat::Binary),
            other => Err(Error::InvalidArgument(format!("unknown matrix format {other:?}"))),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Header line `N d`, then one whitespace-separated row per line. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_matrix_text<W: Write>(m: &Array2<f64>, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        let mut first = true;
        for x in row {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{x}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// `COBAEMB1`, then `N` and `d` as little-endian u64, then row-major f64.
pub fn write_matrix_binary<W: Write>(m: &Array2<f64>, mut w: W) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for x in m.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_matrix<W: Write>(m: &Array2<f64>, format: MatrixFormat, w: W) -> std::io::Result<()> {
    match format {
        MatrixFormat::Text => write_matrix_text(m, w),
        MatrixFormat::Binary => write_matrix_binary(m, w),
    }
}

/// Reads either matrix format, telling them apart by the binary magic.
pub fn read_matrix<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut r = BufReader::new(reader);
    let head = r.fill_buf()?;
    if head.starts_with(BINARY_MAGIC) {
        read_matrix_binary(r)
    } else {
        read_matrix_text(r)
    }
}

fn read_matrix_binary<R: Read>(mut r: R) -> Result<Array2<f64>> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let mut dim = |r: &mut R| -> Result<usize> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word) as usize)
    };
    let rows = dim(&mut r)?;
    let cols = dim(&mut r)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Matrix(format!(
            "expected {} bytes of data for {rows}x{cols}, found {}",
            rows * cols * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Matrix(e.to_string()))
}

fn read_matrix_text<R: BufRead>(r: R) -> Result<Array2<f64>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Matrix("empty file".into()))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Matrix(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::Matrix(format!("header must be `N d`, got {header:?}")));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for t in line.split_whitespace() {
            data.push(
                t.parse::<f64>()
                    .map_err(|_| Error::Matrix(format!("line {}: bad value {t:?}", i + 2)))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::Matrix(format!(
                "line {}: expected {cols} values, found {}",
                i + 2,
                data.len() - before
            )));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Matrix(format!(
            "expected {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Matrix(e.to_string()))
}

pub fn save_matrix(path: &Path, m: &Array2<f64>, format: MatrixFormat) -> Result<()> {
    let mut w = create(path)?;
    write_matrix(m, format, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<Array2<f64>> {
    read_matrix(open(path)?)
}

/// Describes an exported embedding pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub num_nodes: usize,
    pub dim: usize,
    pub mode: AggregationMode,
    pub activation: Activation,
    pub layers: usize,
    pub seed: u64,
    pub epoch: usize,
    pub tied: bool,
    pub format: MatrixFormat,
}

pub const SOURCE_FILE: &str = "S.emb";
pub const TARGET_FILE: &str = "T.emb";
pub const NODES_FILE: &str = "nodes.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `S.emb`, `T.emb`, `nodes.txt` and `manifest.json` into `dir`.
pub fn save_embedding(
    dir: &Path,
    emb: &DualEmbedding,
    manifest: &EmbeddingManifest,
    graph: &DirectedGraph,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let s = dir.join(SOURCE_FILE);
    let t = dir.join(TARGET_FILE);
    save_matrix(&s, &emb.source, manifest.format)?;
    save_matrix(&t, &emb.target, manifest.format)?;
    let nodes = dir.join(NODES_FILE);
    save_node_ids(&nodes, graph)?;
    let m = dir.join(MANIFEST_FILE);
    write_json(&m, manifest)?;
    Ok(vec![s, t, nodes, m])
}

/// Loads an embedding directory; the manifest is optional.
pub fn load_embedding(dir: &Path) -> Result<(DualEmbedding, Option<EmbeddingManifest>)> {
    let source = load_matrix(&dir.join(SOURCE_FILE))?;
    let target = load_matrix(&dir.join(TARGET_FILE))?;
    if source.dim() != target.dim() {
        return Err(Error::Dimension(format!(
            "S is {:?} but T is {:?}",
            source.dim(),
            target.dim()
        )));
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        Some(read_json(&manifest_path)?)
    } else {
        None
    };
    Ok((DualEmbedding { source, target }, manifest))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn save_node_ids(path: &Path, g: &DirectedGraph) -> Result<()> {
    write_node_ids(g, File::create(path).map_err(|e| Error::io(path, e))?).map_err(|e| Error::io(path, e))
}

/// Graph over the node list in `nodes.txt` with the edges of `edge_file`.
pub fn load_graph_with_nodes(nodes_file: &Path, edge_file: &Path) -> Result<DirectedGraph> {
    let ids = read_node_ids(open(nodes_file)?)?;
    let skeleton = DirectedGraph::with_external_ids(ids, &[]).0;
    let edges = read_edges_with_nodes(open(edge_file)?, &skeleton)?;
    Ok(skeleton.with_same_nodes(&edges))
}

fn write_edges(path: &Path, g: &DirectedGraph, edges: &[Edge]) -> Result<()> {
    let mut w = create(path)?;
    for &(u, v) in edges {
        writeln!(w, "{} {}", g.external_id(u), g.external_id(v)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Contents of `split.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_fraction: f64,
    pub num_nodes: usize,
    pub num_train: usize,
    pub num_test: usize,
    pub negatives: Vec<NegativeFileInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeFileInfo {
    pub mix_ratio: f64,
    pub file: String,
    pub reversed: usize,
    pub random: usize,
}

pub fn negative_file_name(mix_ratio: f64) -> String {
    format!("test_neg_{mix_ratio}.edges")
}

/// Writes a split directory: `nodes.txt`, `train.edges`, `test_pos.edges`,
/// one `test_neg_<ratio>.edges` per mix ratio (third column `r` random or
/// `x` reversed) and `split.json`. Contains no timestamps, so reruns are
/// byte-identical.
pub fn save_split(dir: &Path, split: &EdgeSplit, negatives: &[EvalNegatives]) -> Result<SplitManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = &split.train;
    save_node_ids(&dir.join(NODES_FILE), g)?;
    let train: Vec<Edge> = g.edges().collect();
    write_edges(&dir.join("train.edges"), g, &train)?;
    write_edges(&dir.join("test_pos.edges"), g, &split.test_pos)?;
    let mut infos = Vec::new();
    for neg in negatives {
        let file = negative_file_name(neg.mix_ratio);
        let path = dir.join(&file);
        let mut w = create(&path)?;
        for n in &neg.edges {
            let (u, v) = n.edge;
            writeln!(w, "{} {} {}", g.external_id(u), g.external_id(v), n.kind.tag())
                .map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        infos.push(NegativeFileInfo {
            mix_ratio: neg.mix_ratio,
            file,
            reversed: neg.count(NegativeKind::Reversed),
            random: neg.count(NegativeKind::Random),
        });
    }
    let manifest = SplitManifest {
        seed: split.seed,
        test_fraction: split.test_fraction,
        num_nodes: g.num_nodes(),
        num_train: g.num_edges(),
        num_test: split.test_pos.len(),
        negatives: infos,
    };
    write_json(&dir.join("split.json"), &manifest)?;
    Ok(manifest)
}

/// A split directory read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedSplit {
    pub split: EdgeSplit,
    pub negatives: Vec<EvalNegatives>,
    pub manifest: SplitManifest,
}

impl LoadedSplit {
    pub fn negatives_for(&self, mix_ratio: f64) -> Option<&EvalNegatives> {
        self.negatives.iter().find(|n| n.mix_ratio == mix_ratio)
    }

    /// Train plus test positives over the same nodes.
    pub fn full_graph(&self) -> DirectedGraph {
        let mut edges: Vec<Edge> = self.split.train.edges().collect();
        edges.extend_from_slice(&self.split.test_pos);
        self.split.train.with_same_nodes(&edges)
    }
}

pub fn load_split(dir: &Path) -> Result<LoadedSplit> {
    let manifest: SplitManifest = read_json(&dir.join("split.json"))?;
    let train = load_graph_with_nodes(&dir.join(NODES_FILE), &dir.join("train.edges"))?;
    let mut test_pos = read_edges_with_nodes(open(&dir.join("test_pos.edges"))?, &train)?;
    test_pos.sort_unstable();
    let map = train.id_map();
    let mut negatives = Vec::new();
    for info in &manifest.negatives {
        let path = dir.join(&info.file);
        let mut edges = Vec::new();
        for (i, line) in open(&path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let [u, v, tag] = fields[..] else {
                return Err(bad(format!("expected `src dst tag`, got {line:?}")));
            };
            let resolve = |id: &str| map.get(id).copied().ok_or_else(|| bad(format!("unknown node id {id:?}")));
            let kind = NegativeKind::from_tag(tag).ok_or_else(|| bad(format!("unknown tag {tag:?}")))?;
            edges.push(TestNegative {
                edge: (resolve(u)?, resolve(v)?),
                kind,
            });
        }
        negatives.push(EvalNegatives {
            mix_ratio: info.mix_ratio,
            seed: manifest.seed,
            edges,
        });
    }
    Ok(LoadedSplit {
        split: EdgeSplit {
            train,
            test_pos,
            test_fraction: manifest.test_fraction,
            seed: manifest.seed,
        },
        negatives,
        manifest,
    })
}

/// Contents of a checkpoint's `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub epoch: usize,
    pub optimizer_step: u64,
    pub layers: usize,
    pub mode: AggregationMode,
    pub activation: Activation,
    pub tables_frozen: bool,
    pub config: TrainConfig,
}

/// Writes parameters (`source0.bin`, `target0.bin`, `ws_<l>.bin`,
/// `wt_<l>.bin`), optimizer moments (`m_*`, `v_*`) and `state.json` into
/// `dir/epoch_<NNNN>`, returning that directory.
pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint, config: &TrainConfig) -> Result<PathBuf> {
    let out = dir.join(format!("epoch_{:04}", checkpoint.epoch));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let bin = MatrixFormat::Binary;
    let p = &checkpoint.params;
    let o = &checkpoint.optimizer;
    save_matrix(&out.join("source0.bin"), &p.source0, bin)?;
    save_matrix(&out.join("target0.bin"), &p.target0, bin)?;
    save_matrix(&out.join("m_source0.bin"), &o.m_source0, bin)?;
    save_matrix(&out.join("v_source0.bin"), &o.v_source0, bin)?;
    save_matrix(&out.join("m_target0.bin"), &o.m_target0, bin)?;
    save_matrix(&out.join("v_target0.bin"), &o.v_target0, bin)?;
    for (l, (w, moments)) in p.layers.iter().zip(&o.layers).enumerate() {
        save_matrix(&out.join(format!("ws_{l}.bin")), &w.ws, bin)?;
        save_matrix(&out.join(format!("wt_{l}.bin")), &w.wt, bin)?;
        for (name, m) in MOMENT_NAMES.iter().zip(moments) {
            save_matrix(&out.join(format!("{name}_{l}.bin")), m, bin)?;
        }
    }
    let state = CheckpointState {
        epoch: checkpoint.epoch,
        optimizer_step: o.step,
        layers: p.num_layers(),
        mode: p.mode,
        activation: p.activation,
        tables_frozen: p.tables_frozen,
        config: config.clone(),
    };
    write_json(&out.join("state.json"), &state)?;
    Ok(out)
}

const MOMENT_NAMES: [&str; 4] = ["m_ws", "v_ws", "m_wt", "v_wt"];

pub fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, TrainConfig)> {
    let state: CheckpointState = read_json(&dir.join("state.json"))?;
    let m = |name: &str| load_matrix(&dir.join(name));
    let mut layers = Vec::new();
    let mut moments = Vec::new();
    for l in 0..state.layers {
        layers.push(LayerWeights {
            ws: m(&format!("ws_{l}.bin"))?,
            wt: m(&format!("wt_{l}.bin"))?,
        });
        let mut quad = Vec::with_capacity(4);
        for name in MOMENT_NAMES {
            quad.push(m(&format!("{name}_{l}.bin"))?);
        }
        moments.push(quad.try_into().expect("four moment matrices"));
    }
    let params = ModelParams {
        source0: m("source0.bin")?,
        target0: m("target0.bin")?,
        layers,
        activation: state.activation,
        mode: state.mode,
        tables_frozen: state.tables_frozen,
    };
    params.validate()?;
    let optimizer = AdamState {
        step: state.optimizer_step,
        m_source0: m("m_source0.bin")?,
        v_source0: m("v_source0.bin")?,
        m_target0: m("m_target0.bin")?,
        v_target0: m("v_target0.bin")?,
        layers: moments,
    };
    Ok((
        Checkpoint {
            epoch: state.epoch,
            params,
            optimizer,
        },
        state.config,
    ))
}

/// One JSON object per line.
pub fn write_loss_log<W: Write>(reports: &[LossReport], mut w: W) -> Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_loss_log<R: Read>(reader: R) -> Result<Vec<LossReport>> {
    let mut out = Vec::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::read_edge_list;
    use crate::model::init_model;
    use crate::sampler::{build_eval_negatives, split_edges};
    use ndarray::array;

    #[test]
    fn matrix_round_trip_both_formats() {
        let m = array![[0.1, -2.5e-17], [f64::MAX, 1.0 / 3.0], [0.0, -0.0]];
        for format in [MatrixFormat::Text, MatrixFormat::Binary] {
            let mut buf = Vec::new();
            write_matrix(&m, format, &mut buf).unwrap();
            assert_eq!(read_matrix(&buf[..]).unwrap(), m);
        }
        let mut text = Vec::new();
        write_matrix_text(&m, &mut text).unwrap();
        assert!(String::from_utf8(text).unwrap().starts_with("3 2\n"));
    }

    #[test]
    fn malformed_matrices() {
        assert!(read_matrix(&b"2 2\n1 2\n3\n"[..]).is_err());
        assert!(read_matrix(&b"2 2\n1 2\n"[..]).is_err());
        assert!(read_matrix(&b"x\n"[..]).is_err());
        let mut bin = Vec::new();
        write_matrix_binary(&array![[1.0, 2.0]], &mut bin).unwrap();
        bin.pop();
        assert!(read_matrix(&bin[..]).is_err());
    }

    fn toy_graph() -> DirectedGraph {
        let text: String = (0..30).map(|i| format!("n{} n{}\n", i, (i * 7 + 3) % 30)).collect();
        read_edge_list(text.as_bytes()).unwrap().0
    }

    #[test]
    fn split_directory_round_trip() {
        let g = toy_graph();
        let split = split_edges(&g, 0.3, 4).unwrap();
        let negs: Vec<_> = [0.0, 0.5]
            .iter()
            .map(|&r| build_eval_negatives(&g, &split, r, 4).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        save_split(dir.path(), &split, &negs).unwrap();
        let loaded = load_split(dir.path()).unwrap();
        assert_eq!(loaded.split.test_pos, split.test_pos);
        assert_eq!(loaded.split.train.edges().collect::<Vec<_>>(), split.train.edges().collect::<Vec<_>>());
        assert_eq!(loaded.split.train.external_ids(), split.train.external_ids());
        assert_eq!(loaded.negatives, negs);
        assert_eq!(loaded.full_graph().num_edges(), g.num_edges());
        assert!(dir.path().join("test_neg_0.5.edges").exists());
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = TrainConfig {
            dim: 3,
            layers: 2,
            ..TrainConfig::default()
        };
        let params = init_model(&cfg.model_config(5), None, 9).unwrap();
        let mut optimizer = AdamState::new(&params);
        optimizer.step = 7;
        optimizer.v_target0[[1, 2]] = 0.25;
        let ck = Checkpoint {
            epoch: 3,
            params,
            optimizer,
        };
        let dir = tempfile::tempdir().unwrap();
        let out = save_checkpoint(dir.path(), &ck, &cfg).unwrap();
        assert!(out.ends_with("epoch_0003"));
        let (back, back_cfg) = load_checkpoint(&out).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.optimizer.step, 7);
        assert_eq!(back.optimizer.v_target0, ck.optimizer.v_target0);
        assert_eq!(back_cfg, cfg);
    }

    #[test]
    fn loss_log_round_trip() {
        let reports = vec![
            LossReport {
                epoch: 1,
                mean_loss: 1.3,
                pos_term: 0.7,
                neg_term: 0.6,
                grad_norm: 0.01,
            },
            LossReport {
                epoch: 2,
                mean_loss: 1.1,
                pos_term: 0.6,
                neg_term: 0.5,
                grad_norm: 0.02,
            },
        ];
        let mut buf = Vec::new();
        write_loss_log(&reports, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 2);
        assert_eq!(read_loss_log(&buf[..]).unwrap(), reports);
    }

    #[test]
    fn embedding_directory_round_trip() {
        let g = toy_graph();
        let emb = DualEmbedding {
            source: Array2::from_shape_fn((g.num_nodes(), 2), |(i, j)| i as f64 - j as f64 * 0.5),
            target: Array2::from_shape_fn((g.num_nodes(), 2), |(i, j)| (i * j) as f64),
        };
        let manifest = EmbeddingManifest {
            num_nodes: g.num_nodes(),
            dim: 2,
            mode: AggregationMode::Full,
            activation: Activation::Relu,
            layers: 1,
            seed: 0,
            epoch: 40,
            tied: false,
            format: MatrixFormat::Binary,
        };
        let dir = tempfile::tempdir().unwrap();
        save_embedding(dir.path(), &emb, &manifest, &g).unwrap();
        let (back, m) = load_embedding(dir.path()).unwrap();
        assert_eq!(back, emb);
        assert_eq!(m, Some(manifest));
    }
}
