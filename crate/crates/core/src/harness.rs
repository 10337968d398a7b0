//! Small, fully deterministic multi-task experiments.
//!
//! Each task is a Gaussian-blob classification problem in a shared input
//! space. A base network is trained on the pooled data, cloned, and
//! fine-tuned per task; the fine-tuned networks are then merged with every
//! requested method and scored by accuracy relative to the fine-tuned model
//! on the same task.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mcs::{self, McsReport};
use crate::merge::{self, MergeConfig, MergeMethod, TaskBundle};
use crate::model::{ActivationKind, LinearLayer, SequentialModel};

/// splitmix64 finalizer; turns consecutive seeds into unrelated ones.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub name: String,
    /// `input_dim × n`
    pub train_inputs: DenseMatrix,
    pub train_labels: Vec<usize>,
    pub test_inputs: DenseMatrix,
    pub test_labels: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
}

const CENTER_RANGE: f64 = 2.0;
const BLOB_STD: f64 = 0.5;

/// Gaussian-blob tasks: per task, `num_classes` centers uniform in
/// `[-2, 2]^d`, points at `center + 0.5·N(0, I)`, labels cycling through the
/// classes. Train and test splits are independent draws.
pub fn gen_tasks(
    master_seed: u64,
    num_tasks: usize,
    input_dim: usize,
    num_classes: usize,
    samples_per_split: usize,
) -> Result<Vec<SyntheticTask>> {
    if num_tasks == 0 || input_dim == 0 || num_classes == 0 || samples_per_split == 0 {
        return Err(Error::InvalidConfig(
            "task count, input dimension, class count and split size must all be positive".into(),
        ));
    }
    Ok((0..num_tasks)
        .map(|t| {
            let seed = derive_seed(master_seed, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centers = DenseMatrix::from_fn(input_dim, num_classes, |_, _| {
                rng.random_range(-CENTER_RANGE..CENTER_RANGE)
            });
            let split = |rng: &mut ChaCha8Rng| {
                let labels: Vec<usize> = (0..samples_per_split).map(|k| k % num_classes).collect();
                let x = DenseMatrix::from_fn(input_dim, samples_per_split, |r, c| {
                    let noise: f64 = rng.sample(StandardNormal);
                    centers.get(r, labels[c]) + BLOB_STD * noise
                });
                (x, labels)
            };
            let (train_inputs, train_labels) = split(&mut rng);
            let (test_inputs, test_labels) = split(&mut rng);
            SyntheticTask {
                name: format!("task{t}"),
                train_inputs,
                train_labels,
                test_inputs,
                test_labels,
                num_classes,
                seed,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be a nonnegative number, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub task_name: String,
    pub accuracy: f64,
    pub loss: f64,
}

/// Random MLP with `depth` linear layers, biases everywhere, `hidden`
/// activation between layers and raw logits at the end. Weights are
/// `N(0, 1/fan_in)`, biases zero.
pub fn init_mlp(
    input_dim: usize,
    hidden_dim: usize,
    depth: usize,
    num_classes: usize,
    hidden: ActivationKind,
    seed: u64,
) -> Result<SequentialModel> {
    if depth == 0 {
        return Err(Error::InvalidConfig("depth must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(depth);
    let mut fan_in = input_dim;
    for l in 0..depth {
        let last = l + 1 == depth;
        let out = if last { num_classes } else { hidden_dim };
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let weight = DenseMatrix::from_fn(out, fan_in + 1, |_, c| {
            if c == fan_in {
                0.0
            } else {
                std * rng.sample::<f64, _>(StandardNormal)
            }
        });
        let act = if last { ActivationKind::Identity } else { hidden };
        layers.push(LinearLayer::new(format!("fc{}", l + 1), weight, true, act));
        fan_in = out;
    }
    SequentialModel::new(input_dim, layers)
}

/// Column-wise log-softmax cross-entropy and its gradient w.r.t. the logits,
/// both averaged over samples.
fn softmax_cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> (f64, DenseMatrix) {
    let (c, n) = logits.shape();
    let mut grad = DenseMatrix::zeros(c, n);
    let mut loss = 0.0;
    for s in 0..n {
        let col = logits.column(s);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = col.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - col[labels[s]];
        for (k, v) in col.iter().enumerate() {
            let p = (v - log_z).exp();
            let target = if k == labels[s] { 1.0 } else { 0.0 };
            grad.set(k, s, (p - target) / n as f64);
        }
    }
    (loss / n as f64, grad)
}

fn check_labels(model: &SequentialModel, x: &DenseMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != x.cols() {
        return Err(Error::InvalidShape(format!(
            "{} labels for {} samples",
            labels.len(),
            x.cols()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= model.output_dim()) {
        return Err(Error::InvalidShape(format!(
            "label {bad} out of range for {} outputs",
            model.output_dim()
        )));
    }
    Ok(())
}

/// Mean cross-entropy of `model` on `(x, labels)` and the gradient for every
/// layer's weight (same shapes as the weights, bias column included).
pub fn loss_and_gradients(
    model: &SequentialModel,
    x: &DenseMatrix,
    labels: &[usize],
) -> Result<(f64, Vec<DenseMatrix>)> {
    check_labels(model, x, labels)?;
    let layers = model.layers();
    let trace = model.forward_capture(x)?;
    let designs: Vec<DenseMatrix> = layers
        .iter()
        .zip(&trace.per_layer_inputs)
        .map(|(layer, input)| layer.design(input))
        .collect();
    let (loss, mut upstream) = softmax_cross_entropy(&trace.final_output, labels);

    let mut grads = vec![DenseMatrix::zeros(0, 0); layers.len()];
    for (l, layer) in layers.iter().enumerate().rev() {
        let z = layer.weight.matmul(&designs[l])?;
        let dz = DenseMatrix::from_fn(z.rows(), z.cols(), |r, c| {
            upstream.get(r, c) * layer.activation.derivative(z.get(r, c))
        });
        grads[l] = dz.matmul(&designs[l].transpose())?;
        if l > 0 {
            let full = layer.weight.transpose().matmul(&dz)?;
            upstream = full.leading_rows(layer.in_dim());
        }
    }
    Ok((loss, grads))
}

/// Mini-batch SGD on softmax cross-entropy. The batch order is a fresh
/// shuffle per epoch from `hyper.seed`.
pub fn train_on(
    init: &SequentialModel,
    x: &DenseMatrix,
    labels: &[usize],
    hyper: &TrainHyper,
) -> Result<SequentialModel> {
    hyper.validate()?;
    check_labels(init, x, labels)?;
    if x.rows() != init.input_dim() {
        return Err(Error::InvalidShape(format!(
            "model takes {} inputs, data has {} rows",
            init.input_dim(),
            x.rows()
        )));
    }
    let mut weights: Vec<DenseMatrix> = init.layers().iter().map(|l| l.weight.clone()).collect();
    let mut model = init.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..x.cols()).collect();
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let xb = x.select_columns(batch);
            let yb: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (_, grads) = loss_and_gradients(&model, &xb, &yb)?;
            for (l, g) in grads.iter().enumerate() {
                weights[l].add_scaled_assign(-hyper.learning_rate, g)?;
                model = model.with_weight(l, weights[l].clone())?;
            }
        }
    }
    Ok(model)
}

/// Fine-tunes a copy of `init` on the task's training split.
pub fn train_model(init: &SequentialModel, task: &SyntheticTask, hyper: &TrainHyper) -> Result<SequentialModel> {
    if init.output_dim() != task.num_classes {
        return Err(Error::InvalidShape(format!(
            "model has {} outputs, task has {} classes",
            init.output_dim(),
            task.num_classes
        )));
    }
    train_on(init, &task.train_inputs, &task.train_labels, hyper)
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(col: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in col.iter().enumerate() {
        if v > col[best] {
            best = k;
        }
    }
    best
}

pub fn evaluate_on(
    model: &SequentialModel,
    x: &DenseMatrix,
    labels: &[usize],
    task_name: &str,
) -> Result<EvalResult> {
    check_labels(model, x, labels)?;
    let logits = model.forward(x)?;
    let (loss, _) = softmax_cross_entropy(&logits, labels);
    let hits = (0..x.cols())
        .filter(|&s| argmax(&logits.column(s)) == labels[s])
        .count();
    Ok(EvalResult {
        task_name: task_name.to_string(),
        accuracy: if labels.is_empty() { 0.0 } else { hits as f64 / labels.len() as f64 },
        loss,
    })
}

/// Accuracy and mean cross-entropy on the task's test split.
pub fn evaluate(model: &SequentialModel, task: &SyntheticTask) -> Result<EvalResult> {
    evaluate_on(model, &task.test_inputs, &task.test_labels, &task.name)
}

/// Everything that defines one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub num_tasks: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub num_classes: usize,
    pub samples_per_split: usize,
    pub hidden_activation: ActivationKind,
    pub pretrain: TrainHyper,
    pub finetune: TrainHyper,
    pub methods: Vec<MergeConfig>,
    /// Leading training samples per task handed to the merge.
    pub samples_for_merging: usize,
    /// Sample counts for the chained-merge sweep; empty disables it.
    pub sweep: Vec<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            num_tasks: 4,
            input_dim: 16,
            hidden_dim: 32,
            depth: 3,
            num_classes: 4,
            samples_per_split: 500,
            hidden_activation: ActivationKind::Relu,
            pretrain: TrainHyper {
                learning_rate: 0.01,
                epochs: 1,
                batch_size: 32,
                seed: 0,
            },
            finetune: TrainHyper {
                learning_rate: 0.05,
                epochs: 20,
                batch_size: 32,
                seed: 1,
            },
            methods: MergeMethod::ALL.iter().map(|&m| MergeConfig::new(m)).collect(),
            samples_for_merging: 100,
            sweep: Vec::new(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples_for_merging < 2 {
            return Err(Error::InvalidConfig("samples_for_merging must be at least 2".into()));
        }
        if self.sweep.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("sweep sample counts must be at least 2".into()));
        }
        if self.depth == 0 || self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("depth and hidden width must be positive".into()));
        }
        self.pretrain.validate()?;
        self.finetune.validate()?;
        for m in &self.methods {
            m.validate()?;
        }
        Ok(())
    }
}

/// Tasks plus the base and per-task fine-tuned networks.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub tasks: Vec<SyntheticTask>,
    pub base: SequentialModel,
    pub finetuned: Vec<SequentialModel>,
}

impl PreparedExperiment {
    /// Merge inputs using the first `samples` training columns of every task.
    pub fn bundles(&self, samples: usize) -> Result<Vec<TaskBundle>> {
        self.tasks
            .iter()
            .zip(&self.finetuned)
            .map(|(t, m)| TaskBundle::new(t.name.clone(), m.clone(), t.train_inputs.leading_columns(samples)))
            .collect()
    }
}

pub fn prepare_experiment(spec: &ExperimentSpec) -> Result<PreparedExperiment> {
    spec.validate()?;
    let tasks = gen_tasks(spec.seed, spec.num_tasks, spec.input_dim, spec.num_classes, spec.samples_per_split)?;
    let init = init_mlp(
        spec.input_dim,
        spec.hidden_dim,
        spec.depth,
        spec.num_classes,
        spec.hidden_activation,
        derive_seed(spec.seed, u64::MAX),
    )?;
    let pooled_x = DenseMatrix::hstack(&tasks.iter().map(|t| &t.train_inputs).collect::<Vec<_>>())?;
    let pooled_y: Vec<usize> = tasks.iter().flat_map(|t| t.train_labels.iter().copied()).collect();
    let base = train_on(&init, &pooled_x, &pooled_y, &spec.pretrain)?;
    let finetuned = tasks
        .par_iter()
        .map(|t| train_model(&base, t, &spec.finetune))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedExperiment { tasks, base, finetuned })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_name: String,
    pub accuracy: f64,
    pub loss: f64,
    /// Merged accuracy over fine-tuned accuracy on the same task.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub per_task: Vec<TaskScore>,
    pub avg_normalized: f64,
    pub mean_loss: f64,
    pub per_layer_omega: Vec<f64>,
    pub mcs: McsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub samples: usize,
    pub avg_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub finetuned: Vec<EvalResult>,
    pub base: Vec<EvalResult>,
    pub methods: Vec<MethodReport>,
    pub sweep: Vec<SweepPoint>,
}

fn score_merged(
    prepared: &PreparedExperiment,
    reference: &[EvalResult],
    merged: &SequentialModel,
) -> Result<Vec<TaskScore>> {
    prepared
        .tasks
        .iter()
        .zip(reference)
        .map(|(task, ft)| {
            let r = evaluate(merged, task)?;
            Ok(TaskScore {
                normalized: if ft.accuracy > 0.0 { r.accuracy / ft.accuracy } else { 0.0 },
                task_name: r.task_name,
                accuracy: r.accuracy,
                loss: r.loss,
            })
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Merges the prepared networks with one configuration and scores the result.
pub fn run_method(
    prepared: &PreparedExperiment,
    reference: &[EvalResult],
    cfg: &MergeConfig,
    samples: usize,
) -> Result<MethodReport> {
    let bundles = prepared.bundles(samples)?;
    let outcome = merge::merge(&bundles, cfg)?;
    let per_task = score_merged(prepared, reference, &outcome.merged)?;
    let capped: Vec<TaskBundle> = bundles
        .into_iter()
        .map(|b| {
            let x = b.samples.leading_columns(cfg.max_samples_per_task);
            TaskBundle::new(b.task_name, b.model, x)
        })
        .collect::<Result<_>>()?;
    Ok(MethodReport {
        label: cfg.method.label().to_string(),
        avg_normalized: mean(per_task.iter().map(|t| t.normalized)),
        mean_loss: mean(per_task.iter().map(|t| t.loss)),
        per_task,
        per_layer_omega: outcome.per_layer_omega,
        mcs: mcs::mcs_report(&capped, &outcome.merged, cfg.method.label())?,
    })
}

pub fn run_prepared(spec: &ExperimentSpec, prepared: &PreparedExperiment) -> Result<ExperimentReport> {
    let finetuned = prepared
        .tasks
        .iter()
        .zip(&prepared.finetuned)
        .map(|(t, m)| evaluate(m, t))
        .collect::<Result<Vec<_>>>()?;
    let base = prepared
        .tasks
        .iter()
        .map(|t| evaluate(&prepared.base, t))
        .collect::<Result<Vec<_>>>()?;
    let methods = spec
        .methods
        .iter()
        .map(|cfg| run_method(prepared, &finetuned, cfg, spec.samples_for_merging))
        .collect::<Result<Vec<_>>>()?;

    let sweep_cfg = spec
        .methods
        .iter()
        .find(|c| c.method == MergeMethod::Com)
        .cloned()
        .unwrap_or_else(|| MergeConfig::new(MergeMethod::Com));
    let sweep = spec
        .sweep
        .iter()
        .map(|&n| {
            let bundles = prepared.bundles(n)?;
            let outcome = merge::merge(&bundles, &sweep_cfg)?;
            let scores = score_merged(prepared, &finetuned, &outcome.merged)?;
            Ok(SweepPoint {
                samples: n,
                avg_normalized: mean(scores.iter().map(|s| s.normalized)),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExperimentReport {
        spec: spec.clone(),
        finetuned,
        base,
        methods,
        sweep,
    })
}

/// Generate tasks, pretrain, fine-tune, merge with every configured method,
/// and optionally sweep the merge sample count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let prepared = prepare_experiment(spec)?;
    run_prepared(spec, &prepared)
}
