use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use coba::eval::{
    config_hash, eval_link_prediction, precision_at_k, summaries_to_csv, train_linear_probe, MetricDocument,
};
use coba::experiment::{self, summary_rows, TaskSpec};
use coba::graph::{load_edge_list, load_labels, read_features, read_node_ids, DirectedGraph, FeatureTable};
use coba::io::{
    load_embedding, load_graph_with_nodes, load_split, read_json, save_checkpoint, save_embedding, save_split,
    write_json, write_loss_log, EmbeddingManifest, MANIFEST_FILE, NODES_FILE,
};
use coba::model::DualEmbedding;
use coba::sampler::{build_eval_negatives, split_edges};
use coba::training::{train_with, Checkpoint, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::manifest::Run;
use crate::{EvalCommon, EvalGrArgs, EvalLpArgs, EvalNcArgs, ExperimentArgs, PrepareArgs, SweepArgs, TaskKind, TrainArgs};

pub const METRICS_FILE: &str = "metrics.json";
pub const REPORTS_FILE: &str = "reports.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const LOSS_FILE: &str = "loss.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn stem(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn load_features(path: Option<&PathBuf>, g: &DirectedGraph) -> Result<Option<FeatureTable>> {
    path.map(|p| read_features(open(p)?, g).with_context(|| format!("reading features {}", p.display())))
        .transpose()
}

fn check_mix_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.is_empty() {
        bail!("at least one mix ratio is needed");
    }
    for (i, r) in ratios.iter().enumerate() {
        if ratios[..i].contains(r) {
            bail!("mix ratio {r} given twice");
        }
    }
    Ok(())
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    check_mix_ratios(&a.mix_ratios)?;
    let settings = json!({
        "test_fraction": a.test_fraction,
        "mix_ratios": a.mix_ratios,
        "seed": a.seed,
    });
    Run::start(&a.out_dir, "prepare", &settings, a.seed, &[&a.edges])?.execute(|run| {
        let (g, summary) = load_edge_list(&a.edges).with_context(|| format!("reading {}", a.edges.display()))?;
        log::info!(
            "{} nodes, {} edges ({} duplicates and {} self-loops dropped)",
            g.num_nodes(),
            g.num_edges(),
            summary.duplicates,
            summary.self_loops
        );
        let split = split_edges(&g, a.test_fraction, a.seed)?;
        let negatives = a
            .mix_ratios
            .iter()
            .map(|&r| build_eval_negatives(&g, &split, r, a.seed))
            .collect::<coba::Result<Vec<_>>>()?;
        let manifest = save_split(&a.out_dir, &split, &negatives)?;
        log::info!(
            "{} train and {} test edges; negatives for mix ratios {:?}",
            manifest.num_train,
            manifest.num_test,
            a.mix_ratios
        );
        for name in [NODES_FILE, "train.edges", "test_pos.edges"] {
            run.output(&a.out_dir.join(name));
        }
        for info in &manifest.negatives {
            run.output(&a.out_dir.join(&info.file));
        }
        run.output(&a.out_dir.join("split.json"));
        Ok(true)
    })
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.config.resolve()?;
    let settings = json!({
        "train": cfg,
        "checkpoint_every": a.checkpoint_every,
        "format": a.format,
    });
    let inputs: Vec<&Path> = [&a.split, &a.edges, &a.features, &a.config.config]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    let out_dir = &a.out_dir;
    Run::start(out_dir, "train", &settings, cfg.seed, &inputs)?.execute(|run| {
        let g = match (&a.split, &a.edges) {
            (Some(dir), _) => load_split(dir)?.split.train,
            (None, Some(file)) => load_edge_list(file)?.0,
            (None, None) => bail!("either --split or --edges is required"),
        };
        let features = load_features(a.features.as_ref(), &g)?;
        log::info!("training on {} nodes and {} edges", g.num_nodes(), g.num_edges());

        let checkpoint_dir = out_dir.join(CHECKPOINT_DIR);
        let loss_path = out_dir.join(LOSS_FILE);
        let mut loss_log = BufWriter::new(File::create(&loss_path)?);
        let mut side_error: Option<anyhow::Error> = None;
        let mut periodic = Vec::new();
        let result = train_with(&g, &cfg, features.as_ref(), |rep, ck| {
            log::info!(
                "epoch {}/{}: loss {:.6} (pos {:.6}, neg {:.6}) grad norm {:.3e}",
                rep.epoch,
                cfg.epochs,
                rep.mean_loss,
                rep.pos_term,
                rep.neg_term,
                rep.grad_norm
            );
            if side_error.is_some() {
                return;
            }
            let mut step = || -> Result<()> {
                write_loss_log(&[*rep], &mut loss_log)?;
                loss_log.flush()?;
                if a.checkpoint_every > 0 && rep.epoch % a.checkpoint_every == 0 && rep.epoch < cfg.epochs {
                    periodic.push(save_checkpoint(&checkpoint_dir, ck, &cfg)?);
                }
                Ok(())
            };
            side_error = step().err();
        });
        drop(loss_log);
        if let Some(e) = side_error {
            return Err(e);
        }
        run.output(&loss_path);
        for p in &periodic {
            run.output(p);
        }
        match result {
            Ok(out) => {
                let checkpoint = Checkpoint {
                    epoch: cfg.epochs,
                    params: out.params,
                    optimizer: out.optimizer,
                };
                run.output(&save_checkpoint(&checkpoint_dir, &checkpoint, &cfg)?);
                let manifest = EmbeddingManifest {
                    num_nodes: g.num_nodes(),
                    dim: cfg.dim,
                    mode: cfg.mode,
                    activation: cfg.activation,
                    layers: cfg.layers,
                    seed: cfg.seed,
                    epoch: cfg.epochs,
                    tied: cfg.tie_embeddings,
                    format: a.format,
                };
                for p in save_embedding(out_dir, &out.embedding, &manifest, &g)? {
                    run.output(&p);
                }
                Ok(true)
            }
            Err(failure) => {
                if let Some(last) = &failure.last_good {
                    let p = save_checkpoint(&checkpoint_dir, last, &cfg)?;
                    log::warn!("kept the checkpoint of epoch {} at {}", last.epoch, p.display());
                    run.output(&p);
                }
                Err(anyhow::Error::new(failure.error).context("training failed"))
            }
        }
    })
}

/// Embedding manifest if present; read before the run starts so its
/// settings land in the run manifest.
fn peek_embedding_manifest(dir: &Path) -> Result<Option<EmbeddingManifest>> {
    let path = dir.join(MANIFEST_FILE);
    Ok(if path.exists() { Some(read_json(&path)?) } else { None })
}

fn embedding_node_ids(dir: &Path) -> Result<Option<Vec<String>>> {
    let path = dir.join(NODES_FILE);
    Ok(if path.exists() {
        Some(read_node_ids(open(&path)?)?)
    } else {
        None
    })
}

fn check_rows(emb: &DualEmbedding, nodes: usize, what: &str) -> Result<()> {
    if emb.num_nodes() != nodes {
        bail!("embeddings have {} rows but {what} has {nodes} nodes", emb.num_nodes());
    }
    Ok(())
}

fn emit_documents(run: &mut Run, out_dir: &Path, docs: &[MetricDocument]) -> Result<()> {
    let path = out_dir.join(METRICS_FILE);
    write_json(&path, &docs)?;
    run.output(&path);
    println!("{}", serde_json::to_string_pretty(docs)?);
    Ok(())
}

fn eval_run<S: Serialize>(
    command: &str,
    common: &EvalCommon,
    settings: &S,
    seed: u64,
    inputs: &[&Path],
    body: impl FnOnce(&DualEmbedding) -> Result<Vec<coba::eval::MetricReport>>,
    dataset: String,
) -> Result<()> {
    let hash = config_hash(settings);
    let mut all_inputs = vec![common.embeddings.as_path()];
    all_inputs.extend_from_slice(inputs);
    Run::start(&common.out_dir, command, settings, seed, &all_inputs)?.execute(|run| {
        let (emb, _) = load_embedding(&common.embeddings)?;
        let reports = body(&emb)?;
        let docs: Vec<MetricDocument> = reports
            .iter()
            .map(|r| MetricDocument::new(r, &dataset, seed, hash.clone()))
            .collect();
        emit_documents(run, &common.out_dir, &docs)?;
        Ok(true)
    })
}

pub fn eval_lp(a: &EvalLpArgs) -> Result<()> {
    let emb_manifest = peek_embedding_manifest(&a.common.embeddings)?;
    let seed = emb_manifest.as_ref().map_or(0, |m| m.seed);
    let settings = json!({
        "task": "link_prediction",
        "mix": a.mix,
        "embedding": emb_manifest,
    });
    let dataset = a.common.dataset.clone().unwrap_or_else(|| stem(&a.split));
    eval_run(
        "eval lp",
        &a.common,
        &settings,
        seed,
        &[&a.split],
        |emb| {
            let loaded = load_split(&a.split)?;
            let split_ids = loaded.split.train.external_ids();
            if let Some(ids) = embedding_node_ids(&a.common.embeddings)? {
                if ids != split_ids {
                    bail!(
                        "embedding node list ({} nodes) differs from the split's ({} nodes)",
                        ids.len(),
                        split_ids.len()
                    );
                }
            }
            check_rows(emb, split_ids.len(), "the split")?;
            let mixes: Vec<f64> = if a.mix.is_empty() {
                loaded.manifest.negatives.iter().map(|n| n.mix_ratio).collect()
            } else {
                a.mix.clone()
            };
            mixes
                .iter()
                .map(|&r| {
                    let negs = loaded.negatives_for(r).ok_or_else(|| {
                        let have: Vec<f64> = loaded.negatives.iter().map(|n| n.mix_ratio).collect();
                        anyhow!("split has no negatives for mix ratio {r} (available: {have:?})")
                    })?;
                    Ok(eval_link_prediction(emb, &loaded.split.test_pos, negs)?)
                })
                .collect()
        },
        dataset,
    )
}

pub fn eval_nc(a: &EvalNcArgs) -> Result<()> {
    let emb_manifest = peek_embedding_manifest(&a.common.embeddings)?;
    let seed = a.seed.or(emb_manifest.as_ref().map(|m| m.seed)).unwrap_or(0);
    let settings = json!({
        "task": "node_classification",
        "train_fraction": a.train_fraction,
        "seed": seed,
        "embedding": emb_manifest,
    });
    let dataset = a.common.dataset.clone().unwrap_or_else(|| stem(&a.labels));
    eval_run(
        "eval nc",
        &a.common,
        &settings,
        seed,
        &[&a.labels],
        |emb| {
            let ids = embedding_node_ids(&a.common.embeddings)?
                .ok_or_else(|| anyhow!("{} lacks {NODES_FILE}; labels cannot be aligned", a.common.embeddings.display()))?;
            check_rows(emb, ids.len(), NODES_FILE)?;
            let skeleton = DirectedGraph::with_external_ids(ids, &[]).0;
            let labels = load_labels(&a.labels, &skeleton)?;
            Ok(vec![train_linear_probe(emb, &labels, a.train_fraction, seed)?])
        },
        dataset,
    )
}

pub fn eval_gr(a: &EvalGrArgs) -> Result<()> {
    let emb_manifest = peek_embedding_manifest(&a.common.embeddings)?;
    let seed = a.seed.or(emb_manifest.as_ref().map(|m| m.seed)).unwrap_or(0);
    let settings = json!({
        "task": "graph_reconstruction",
        "node_fraction": a.node_fraction,
        "ks": a.ks,
        "seed": seed,
        "embedding": emb_manifest,
    });
    let dataset = a.common.dataset.clone().unwrap_or_else(|| stem(&a.edges));
    eval_run(
        "eval gr",
        &a.common,
        &settings,
        seed,
        &[&a.edges],
        |emb| {
            let nodes = a.common.embeddings.join(NODES_FILE);
            let g = if nodes.exists() {
                load_graph_with_nodes(&nodes, &a.edges).with_context(|| {
                    format!("reading {} over the embedding's node list", a.edges.display())
                })?
            } else {
                load_edge_list(&a.edges)?.0
            };
            check_rows(emb, g.num_nodes(), "the graph")?;
            Ok(vec![precision_at_k(emb, &g, a.node_fraction, &a.ks, seed)?])
        },
        dataset,
    )
}

fn task_settings(a: &ExperimentArgs) -> serde_json::Value {
    match a.task {
        TaskKind::Lp => json!({"task": "link_prediction", "test_fraction": a.test_fraction, "mix_ratios": a.mix_ratios}),
        TaskKind::Nc => json!({"task": "node_classification", "train_fraction": a.train_fraction}),
        TaskKind::Gr => json!({"task": "graph_reconstruction", "node_fraction": a.node_fraction, "ks": a.ks}),
    }
}

fn build_task(a: &ExperimentArgs, g: &DirectedGraph) -> Result<TaskSpec> {
    Ok(match a.task {
        TaskKind::Lp => {
            check_mix_ratios(&a.mix_ratios)?;
            TaskSpec::LinkPrediction {
                test_fraction: a.test_fraction,
                mix_ratios: a.mix_ratios.clone(),
            }
        }
        TaskKind::Nc => {
            let path = a.labels.as_ref().ok_or_else(|| anyhow!("--task nc needs --labels"))?;
            TaskSpec::NodeClassification {
                labels: load_labels(path, g)?,
                train_fraction: a.train_fraction,
            }
        }
        TaskKind::Gr => TaskSpec::Reconstruction {
            node_fraction: a.node_fraction,
            ks: a.ks.clone(),
        },
    })
}

/// A metric document tagged with the configuration that produced it.
#[derive(Serialize)]
struct LabeledDocument<'a> {
    label: &'a str,
    #[serde(flatten)]
    document: MetricDocument,
}

fn run_experiment(command: &str, a: &ExperimentArgs, key: &str, values: &[String]) -> Result<()> {
    if a.seeds.is_empty() {
        bail!("at least one seed is needed");
    }
    let base = a.config.resolve()?;
    // Reject an unknown key or bad value before anything trains.
    let configs: Vec<TrainConfig> = values
        .iter()
        .map(|v| {
            let mut cfg = base.clone();
            cfg.set(key, v)?;
            cfg.validate()?;
            Ok(cfg)
        })
        .collect::<Result<_>>()
        .with_context(|| format!("bad sweep over {key}"))?;
    let settings = json!({
        "train": base,
        "evaluation": task_settings(a),
        "param": key,
        "values": values,
        "seeds": a.seeds,
    });
    let inputs: Vec<&Path> = [Some(&a.edges), a.labels.as_ref(), a.features.as_ref(), a.config.config.as_ref()]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    let dataset = a.dataset.clone().unwrap_or_else(|| stem(&a.edges));
    Run::start(&a.out_dir, command, &settings, base.seed, &inputs)?.execute(|run| {
        let (g, _) = load_edge_list(&a.edges)?;
        let features = load_features(a.features.as_ref(), &g)?;
        let task = build_task(a, &g)?;
        let runs = experiment::sweep(&g, &base, key, values, &task, &a.seeds, features.as_ref())?;

        let mut documents = Vec::new();
        for (r, cfg) in runs.iter().zip(&configs) {
            for (seed, msg) in &r.failures {
                run.failure(format!("{} seed {seed}: {msg}", r.label));
            }
            for (seed, report) in &r.reports {
                let run_cfg = TrainConfig { seed: *seed, ..cfg.clone() };
                documents.push(LabeledDocument {
                    label: &r.label,
                    document: MetricDocument::new(report, &dataset, *seed, config_hash(&run_cfg)),
                });
            }
        }
        let reports_path = a.out_dir.join(REPORTS_FILE);
        write_json(&reports_path, &documents)?;
        run.output(&reports_path);

        let csv = summaries_to_csv(&summary_rows(&runs));
        let summary_path = a.out_dir.join(SUMMARY_FILE);
        std::fs::write(&summary_path, &csv).with_context(|| format!("writing {}", summary_path.display()))?;
        run.output(&summary_path);
        print!("{csv}");

        let missing: Vec<&str> = runs
            .iter()
            .filter(|r| r.summaries.is_empty())
            .map(|r| r.label.as_str())
            .collect();
        if !missing.is_empty() {
            log::error!("no successful seed for {}", missing.join(", "));
        }
        Ok(missing.is_empty())
    })
}

pub fn ablate(a: &ExperimentArgs) -> Result<()> {
    let modes: Vec<String> = coba::model::AggregationMode::ALL
        .iter()
        .map(|m| m.as_str().to_owned())
        .collect();
    run_experiment("ablate", a, "mode", &modes)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    run_experiment("sweep", &a.experiment, &a.param, &a.values)
}
