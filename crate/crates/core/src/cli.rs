//! Command-line front end used by the `cmm` binary.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for data or model errors.
//! Diagnostics go to stdout as JSON; artifacts are written to files.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentSpec};
use crate::io;
use crate::linalg;
use crate::mcs;
use crate::merge::{self, MergeConfig, MergeMethod, SensitivityWeights, TaskBundle};
use crate::model::ActivationKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Environment variable capping the worker thread count (0 or unset: default).
pub const THREADS_ENV: &str = "CMM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cmm", version, about = "Merge feed-forward networks layer by layer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic tasks, train a base model, fine-tune one model per task
    TrainToy(TrainToyArgs),
    /// Merge checkpoints using per-task sample matrices
    Merge(MergeArgs),
    /// Measure covariate shift between task models and a merged model
    Mcs(McsArgs),
    /// Evaluate a checkpoint on a sample/label pair
    Eval(EvalArgs),
    /// Run the full pretrain / fine-tune / merge / score pipeline
    Experiment(ExperimentArgs),
}

fn parse_on_off(s: &str) -> std::result::Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(format!("expected `on` or `off`, got `{other}`")),
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Relative Tikhonov strength
    #[arg(long, default_value_t = linalg::DEFAULT_LAMBDA_REL)]
    tikhonov: f64,
    /// Relative eigenvalue cutoff for the pseudo-inverse
    #[arg(long = "rank-eps", default_value_t = linalg::DEFAULT_RANK_EPS)]
    rank_eps: f64,
    /// Unit-normalize samples before forming Gram matrices (on/off)
    #[arg(long, default_value = "on", value_parser = parse_on_off)]
    normalize: bool,
    /// Use at most this many leading samples per task
    #[arg(long = "max-samples", default_value_t = 500)]
    max_samples: usize,
    /// Floor for sensitivity weights, relative to the largest
    #[arg(long = "weight-floor", default_value_t = 1e-6)]
    weight_floor: f64,
}

impl SolverArgs {
    fn config(&self, method: MergeMethod) -> MergeConfig {
        MergeConfig {
            method,
            lambda_rel: self.tikhonov,
            rank_eps: self.rank_eps,
            normalize: self.normalize,
            max_samples_per_task: self.max_samples,
            weight_floor_rel: self.weight_floor,
        }
    }
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    tasks: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Samples per train/test split
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// avg, regmean, com, or com-weighted
    #[arg(long, default_value = "com", value_parser = parse_method)]
    method: MergeMethod,
    /// Task checkpoint directory (repeat once per task)
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Task sample matrix, d×n (repeat once per task, same order as --model)
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    /// Directory for the merged checkpoint
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct McsArgs {
    /// Merged checkpoint directory
    #[arg(long)]
    merged: PathBuf,
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long = "data", required = true)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = "mcs.json")]
    out: PathBuf,
    /// Label stored in the report
    #[arg(long, default_value = "merged")]
    label: String,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// Sample matrix, d×n
    #[arg(long)]
    data: PathBuf,
    /// 1×n label matrix
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    tasks: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long = "samples-per-split", default_value_t = 500)]
    samples_per_split: usize,
    /// Comma-separated merge methods
    #[arg(long, default_value = "avg,regmean,com,com-weighted", value_delimiter = ',', value_parser = parse_method)]
    methods: Vec<MergeMethod>,
    /// Training samples per task handed to the merge
    #[arg(long = "merge-samples", default_value_t = 100)]
    merge_samples: usize,
    /// Comma-separated sample counts for a chained-merge sweep
    #[arg(long, value_delimiter = ',')]
    sweep: Vec<usize>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

fn parse_method(s: &str) -> std::result::Result<MergeMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Usage(msg),
            other => Failure::Data(other),
        }
    }
}

/// Applies [`THREADS_ENV`] to the global rayon pool. Call once, early.
pub fn configure_threads() {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if threads > 0 {
        // Fails only if the pool is already initialized; then the existing one is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    let outcome = match cli.command {
        Command::TrainToy(a) => train_toy(&a, stdout),
        Command::Merge(a) => merge_cmd(&a, stdout),
        Command::Mcs(a) => mcs_cmd(&a, stdout),
        Command::Eval(a) => eval_cmd(&a, stdout),
        Command::Experiment(a) => experiment_cmd(&a, stdout),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn emit<T: Serialize>(stdout: &mut dyn Write, value: &T) -> std::result::Result<(), Failure> {
    let text = io::to_json(value)?;
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Data(Error::io("<stdout>", e)))
}

fn check_pairs(models: &[PathBuf], data: &[PathBuf]) -> std::result::Result<(), Failure> {
    if models.len() != data.len() {
        return Err(Failure::Usage(format!(
            "got {} --model and {} --data arguments; they must pair up",
            models.len(),
            data.len()
        )));
    }
    Ok(())
}

fn load_bundles(models: &[PathBuf], data: &[PathBuf]) -> Result<Vec<TaskBundle>> {
    models
        .iter()
        .zip(data)
        .map(|(m, d)| {
            let name = task_name(m);
            TaskBundle::new(name, io::load_checkpoint(m)?, io::load_matrix(d)?)
        })
        .collect()
}

fn task_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Serialize)]
struct TrainToySummary {
    base: PathBuf,
    tasks: Vec<TrainToyTask>,
}

#[derive(Serialize)]
struct TrainToyTask {
    name: String,
    model: PathBuf,
    train: PathBuf,
    train_labels: PathBuf,
    test: PathBuf,
    test_labels: PathBuf,
    eval: harness::EvalResult,
}

fn train_toy(a: &TrainToyArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let spec = ExperimentSpec {
        seed: a.seed,
        num_tasks: a.tasks,
        input_dim: a.dim,
        hidden_dim: a.hidden,
        depth: a.depth,
        num_classes: a.classes,
        samples_per_split: a.samples,
        methods: Vec::new(),
        ..ExperimentSpec::default()
    };
    let prepared = harness::prepare_experiment(&spec)?;
    let base = a.out.join("base");
    io::save_checkpoint(&prepared.base, &base)?;
    let mut tasks = Vec::new();
    for (task, model) in prepared.tasks.iter().zip(&prepared.finetuned) {
        let dir = a.out.join(&task.name);
        let entry = TrainToyTask {
            name: task.name.clone(),
            model: dir.join("model"),
            train: dir.join("train.cmmx"),
            train_labels: dir.join("train_labels.cmmx"),
            test: dir.join("test.cmmx"),
            test_labels: dir.join("test_labels.cmmx"),
            eval: harness::evaluate(model, task)?,
        };
        io::save_checkpoint(model, &entry.model)?;
        io::save_matrix(&task.train_inputs, &entry.train)?;
        io::save_labels(&task.train_labels, &entry.train_labels)?;
        io::save_matrix(&task.test_inputs, &entry.test)?;
        io::save_labels(&task.test_labels, &entry.test_labels)?;
        tasks.push(entry);
    }
    emit(stdout, &TrainToySummary { base, tasks })
}

#[derive(Serialize)]
struct MergeSummary {
    method: MergeMethod,
    per_layer_omega: Vec<f64>,
    per_layer_weights: Vec<SensitivityWeights>,
    stats_provenance: Vec<Vec<usize>>,
}

fn merge_cmd(a: &MergeArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    check_pairs(&a.models, &a.data)?;
    let cfg = a.solver.config(a.method);
    cfg.validate()?;
    let bundles = load_bundles(&a.models, &a.data)?;
    let outcome = merge::merge(&bundles, &cfg)?;
    io::save_checkpoint(&outcome.merged, &a.out)?;
    emit(
        stdout,
        &MergeSummary {
            method: a.method,
            per_layer_omega: outcome.per_layer_omega,
            per_layer_weights: outcome.per_layer_weights,
            stats_provenance: outcome.stats_provenance,
        },
    )
}

fn mcs_cmd(a: &McsArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    check_pairs(&a.models, &a.data)?;
    let merged = io::load_checkpoint(&a.merged)?;
    let bundles = load_bundles(&a.models, &a.data)?;
    let report = mcs::mcs_report(&bundles, &merged, a.label.clone())?;
    io::write_json(&report, &a.out)?;
    emit(stdout, &serde_json::json!({ "out": a.out, "grand_total": report.grand_total }))
}

fn eval_cmd(a: &EvalArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let model = io::load_checkpoint(&a.model)?;
    let x = io::load_matrix(&a.data)?;
    let labels = io::load_labels(&a.labels)?;
    let result = harness::evaluate_on(&model, &x, &labels, &task_name(&a.data))?;
    emit(stdout, &result)
}

fn experiment_cmd(a: &ExperimentArgs, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    let spec = ExperimentSpec {
        seed: a.seed,
        num_tasks: a.tasks,
        input_dim: a.dim,
        hidden_dim: a.hidden,
        depth: a.depth,
        num_classes: a.classes,
        samples_per_split: a.samples_per_split,
        hidden_activation: ActivationKind::Relu,
        methods: a.methods.iter().map(|&m| a.solver.config(m)).collect(),
        samples_for_merging: a.merge_samples,
        sweep: a.sweep.clone(),
        ..ExperimentSpec::default()
    };
    let report = harness::run_experiment(&spec)?;
    io::write_json(&report, &a.out)?;
    let summary: Vec<_> = report
        .methods
        .iter()
        .map(|m| serde_json::json!({ "method": m.label, "avg_normalized": m.avg_normalized, "mcs": m.mcs.grand_total }))
        .collect();
    emit(stdout, &serde_json::json!({ "out": a.out, "methods": summary, "sweep": report.sweep }))
}
