//! `coba`: prepare splits, train dual embeddings, evaluate them, and run
//! ablations and hyperparameter sweeps.
//!
//! Every command writes `run.json` into its output directory before doing any
//! work, and exits nonzero unless all requested outputs were produced.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coba::io::MatrixFormat;

use config::ConfigArgs;

#[derive(Parser, Debug)]
#[command(name = "coba", version, about = "Source/target embeddings for directed graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split an edge list into train and test positives plus tagged negatives.
    Prepare(PrepareArgs),
    /// Train embeddings on an edge list or on the train part of a split.
    Train(TrainArgs),
    /// Evaluate exported embeddings.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Train and evaluate the three aggregation modes over several seeds.
    Ablate(ExperimentArgs),
    /// Train and evaluate one config key at several values over several seeds.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct PrepareArgs {
    /// Edge list, one `src dst` pair per line.
    edges: PathBuf,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    /// Fractions of test negatives made by reversing a test positive.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
    mix_ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "input", required = true, multiple = false, args = ["split", "edges"])]
struct TrainArgs {
    /// Split directory from `prepare`; training uses its train edges.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Edge list; training uses every edge.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Node attribute rows (`node f1 .. fF`) used as initial tables.
    #[arg(long)]
    features: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Also checkpoint every this many epochs (0: final epoch only).
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Matrix format of S.emb and T.emb.
    #[arg(long, default_value = "text")]
    format: MatrixFormat,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
enum EvalCommand {
    /// Link prediction AUC against a split's tagged negatives.
    Lp(EvalLpArgs),
    /// Node classification with a linear probe on `[s, t]`.
    Nc(EvalNcArgs),
    /// Graph reconstruction precision@k.
    Gr(EvalGrArgs),
}

#[derive(Args, Debug)]
struct EvalCommon {
    /// Directory holding S.emb, T.emb and (usually) nodes.txt.
    #[arg(long)]
    embeddings: PathBuf,
    /// Name recorded in metric documents; defaults to the input's file name.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalLpArgs {
    #[command(flatten)]
    common: EvalCommon,
    #[arg(long)]
    split: PathBuf,
    /// Mix ratios to evaluate; every one in the split by default.
    #[arg(long, value_delimiter = ',')]
    mix: Vec<f64>,
}

#[derive(Args, Debug)]
struct EvalNcArgs {
    #[command(flatten)]
    common: EvalCommon,
    /// `node label` lines.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Seed of the stratified split; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalGrArgs {
    #[command(flatten)]
    common: EvalCommon,
    /// The graph to reconstruct.
    #[arg(long)]
    edges: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    node_fraction: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 200])]
    ks: Vec<usize>,
    /// Seed of the node sample; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum TaskKind {
    Lp,
    Nc,
    Gr,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Edge list of the dataset.
    edges: PathBuf,
    #[arg(long, value_enum, default_value_t = TaskKind::Lp)]
    task: TaskKind,
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
    mix_ratios: Vec<f64>,
    /// Required for `--task nc`.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    node_fraction: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100, 200])]
    ks: Vec<usize>,
    /// One full train+eval run per seed; replaces the config seed.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9])]
    seeds: Vec<u64>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Config key to vary, e.g. d, n, layers, lr, mode.
    #[arg(long)]
    param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(EvalCommand::Lp(a)) => commands::eval_lp(&a),
        Command::Eval(EvalCommand::Nc(a)) => commands::eval_nc(&a),
        Command::Eval(EvalCommand::Gr(a)) => commands::eval_gr(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
