//! Layer-wise merging of task-specific networks.
//!
//! For one layer with task weights `W_i` and task inputs `X_i` the merged
//! weight minimizes `Σ_i ω_i ‖W X_i − W_i X_i‖²`, which has the closed form
//!
//! ```text
//! W_M = (Σ ω_i W_i G_i) · (Σ ω_i G_i)⁺      G_i = X̃_i X̃_iᵀ
//! ```
//!
//! where `X̃_i` is `X_i` with a ones row appended for biased layers and,
//! optionally, every column scaled to unit norm. The pseudo-inverse is the
//! Tikhonov-regularized one from [`crate::linalg::pinv_tikhonov`].
//!
//! Three drivers differ only in where the `X_i` come from:
//!
//! * [`merge_average`] ignores activations and averages weights.
//! * [`merge_simultaneous`] uses every task's own, unmerged activations.
//! * [`merge_com`] walks the layers in order and feeds each task's samples
//!   through the merged prefix, so layer `l` is fitted on exactly the inputs
//!   it will see in the merged network.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::model::{LinearLayer, SequentialModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MergeMethod {
    #[serde(rename = "avg")]
    Average,
    #[serde(rename = "regmean")]
    RegMean,
    #[serde(rename = "com")]
    Com,
    #[serde(rename = "com-weighted")]
    ComWeighted,
}

impl MergeMethod {
    pub const ALL: [MergeMethod; 4] = [Self::Average, Self::RegMean, Self::Com, Self::ComWeighted];

    pub fn label(self) -> &'static str {
        match self {
            Self::Average => "avg",
            Self::RegMean => "regmean",
            Self::Com => "com",
            Self::ComWeighted => "com-weighted",
        }
    }
}

impl fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MergeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(Self::Average),
            "regmean" => Ok(Self::RegMean),
            "com" => Ok(Self::Com),
            "com-weighted" | "com_weighted" => Ok(Self::ComWeighted),
            other => Err(Error::InvalidConfig(format!("unknown merge method `{other}`"))),
        }
    }
}

/// Solver settings shared by all merge drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub method: MergeMethod,
    /// Tikhonov strength relative to the mean eigenvalue of the summed Gram.
    /// The right scale is problem dependent; `1e-4` is a mild default.
    pub lambda_rel: f64,
    /// Eigenvalues below `rank_eps · λ_max` are treated as zero.
    pub rank_eps: f64,
    /// Unit-normalize sample columns before forming Grams.
    pub normalize: bool,
    /// Only the first this-many samples of each task are used.
    pub max_samples_per_task: usize,
    /// Sensitivity weights are floored at this fraction of the largest one.
    pub weight_floor_rel: f64,
}

impl MergeConfig {
    pub fn new(method: MergeMethod) -> Self {
        Self {
            method,
            lambda_rel: linalg::DEFAULT_LAMBDA_REL,
            rank_eps: linalg::DEFAULT_RANK_EPS,
            normalize: true,
            max_samples_per_task: 500,
            weight_floor_rel: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda_rel >= 0.0 && self.lambda_rel.is_finite()) {
            return bad(format!("lambda_rel must be a nonnegative number, got {}", self.lambda_rel));
        }
        if !(self.rank_eps >= 0.0 && self.rank_eps.is_finite()) {
            return bad(format!("rank_eps must be a nonnegative number, got {}", self.rank_eps));
        }
        if self.max_samples_per_task < 2 {
            return bad(format!(
                "max_samples_per_task must be at least 2, got {}",
                self.max_samples_per_task
            ));
        }
        if !(0.0..=1.0).contains(&self.weight_floor_rel) {
            return bad(format!("weight_floor_rel must lie in [0, 1], got {}", self.weight_floor_rel));
        }
        Ok(())
    }
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self::new(MergeMethod::Com)
    }
}

/// One task's fine-tuned model together with its input samples (`d × n`).
#[derive(Debug, Clone)]
pub struct TaskBundle {
    pub task_name: String,
    pub model: SequentialModel,
    pub samples: DenseMatrix,
}

impl TaskBundle {
    pub fn new(task_name: impl Into<String>, model: SequentialModel, samples: DenseMatrix) -> Result<Self> {
        if samples.rows() != model.input_dim() {
            return Err(Error::InvalidShape(format!(
                "samples have {} rows but the model takes {} inputs",
                samples.rows(),
                model.input_dim()
            )));
        }
        if samples.cols() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: samples.cols(),
            });
        }
        Ok(Self {
            task_name: task_name.into(),
            model,
            samples,
        })
    }
}

/// Per-task importance weights `ω_i` for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityWeights {
    pub per_task: Vec<f64>,
}

impl SensitivityWeights {
    pub fn uniform(n: usize) -> Self {
        Self {
            per_task: vec![1.0; n],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            per_task: self.per_task.iter().map(|w| w * c).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.per_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_task.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub merged: SequentialModel,
    /// `Ω^l` at the solution, evaluated on the activations the layer was fitted on.
    pub per_layer_omega: Vec<f64>,
    /// Only filled for [`MergeMethod::ComWeighted`].
    pub per_layer_weights: Vec<SensitivityWeights>,
    /// `[layer][task]` number of samples that entered the statistics.
    pub stats_provenance: Vec<Vec<usize>>,
}

/// `Σ_i ‖W_M X_i − W_i X_i‖²_F`.
pub fn objective_omega(w_m: &DenseMatrix, ws: &[DenseMatrix], xs: &[DenseMatrix]) -> Result<f64> {
    if ws.len() != xs.len() || ws.is_empty() {
        return Err(Error::InvalidShape(format!(
            "objective needs matching nonempty weight and input lists, got {} and {}",
            ws.len(),
            xs.len()
        )));
    }
    let mut total = 0.0;
    for (w, x) in ws.iter().zip(xs) {
        let diff = w_m.sub(w)?;
        let r = diff.matmul(x)?;
        total += r.as_slice().iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total)
}

/// Off-diagonal-norm importance weights, floored at `floor_rel · max ω`.
/// All-zero raw weights fall back to uniform.
pub fn sensitivity_weights(grams: &[DenseMatrix], floor_rel: f64) -> Result<SensitivityWeights> {
    if let Some(first) = grams.first() {
        if grams.iter().any(|g| g.shape() != first.shape()) {
            return Err(Error::InvalidShape("Gram matrices differ in size".into()));
        }
    }
    let raw = grams.iter().map(linalg::offdiag_norm).collect::<Result<Vec<_>>>()?;
    let max = raw.iter().copied().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Ok(SensitivityWeights::uniform(grams.len()));
    }
    let floor = floor_rel * max;
    Ok(SensitivityWeights {
        per_task: raw.into_iter().map(|w| w.max(floor)).collect(),
    })
}

/// Regression inputs of one task at one layer.
struct LayerStats {
    /// `X̃`: augmented and (optionally) column-normalized inputs.
    design: DenseMatrix,
    gram: DenseMatrix,
}

impl LayerStats {
    fn new(x: &DenseMatrix, has_bias: bool, normalize: bool) -> Result<Self> {
        let aug = if has_bias { x.with_ones_row() } else { x.clone() };
        let design = if normalize {
            linalg::normalize_columns(&aug)
        } else {
            aug
        };
        let gram = linalg::gram(&design, false)?;
        Ok(Self { design, gram })
    }
}

fn collect_stats(xs: &[&DenseMatrix], has_bias: bool, normalize: bool) -> Result<Vec<LayerStats>> {
    xs.par_iter()
        .map(|x| LayerStats::new(x, has_bias, normalize))
        .collect()
}

/// Weighted closed-form solve. Sums run in task order.
fn solve(ws: &[&DenseMatrix], stats: &[LayerStats], weights: &SensitivityWeights, cfg: &MergeConfig) -> Result<DenseMatrix> {
    let (out, d) = ws[0].shape();
    let mut cross = DenseMatrix::zeros(out, d);
    let mut gram = DenseMatrix::zeros(d, d);
    let crosses: Vec<DenseMatrix> = ws
        .par_iter()
        .zip(stats.par_iter())
        .map(|(w, s)| w.matmul(&s.gram))
        .collect::<Result<_>>()?;
    for ((c, s), &omega) in crosses.iter().zip(stats).zip(&weights.per_task) {
        cross.add_scaled_assign(omega, c)?;
        gram.add_scaled_assign(omega, &s.gram)?;
    }
    let inv = linalg::pinv_tikhonov(&gram, cfg.lambda_rel, cfg.rank_eps)?;
    cross.matmul(&inv)
}

fn omega_of(w_m: &DenseMatrix, ws: &[&DenseMatrix], stats: &[LayerStats]) -> Result<f64> {
    let ws: Vec<DenseMatrix> = ws.iter().map(|w| (*w).clone()).collect();
    let xs: Vec<DenseMatrix> = stats.iter().map(|s| s.design.clone()).collect();
    objective_omega(w_m, &ws, &xs)
}

/// Closed-form merged weight for a single layer.
///
/// `xs[i]` are the raw layer inputs (`d × n_i`). A weight with `d + 1`
/// columns is treated as carrying a bias, and a ones row is appended to
/// each input.
pub fn regmean_layer(
    ws: &[DenseMatrix],
    xs: &[DenseMatrix],
    weights: &SensitivityWeights,
    cfg: &MergeConfig,
) -> Result<DenseMatrix> {
    if ws.is_empty() || ws.len() != xs.len() || weights.len() != ws.len() {
        return Err(Error::InvalidShape(format!(
            "regmean_layer needs equally many weights ({}), inputs ({}) and importance weights ({})",
            ws.len(),
            xs.len(),
            weights.len()
        )));
    }
    let d = xs[0].rows();
    if xs.iter().any(|x| x.rows() != d) {
        return Err(Error::InvalidShape("task inputs differ in dimension".into()));
    }
    let shape = ws[0].shape();
    if ws.iter().any(|w| w.shape() != shape) {
        return Err(Error::InvalidShape("task weights differ in shape".into()));
    }
    let has_bias = match shape.1 {
        c if c == d => false,
        c if c == d + 1 => true,
        c => {
            return Err(Error::InvalidShape(format!(
                "weights with {c} columns cannot act on {d}-dimensional inputs"
            )))
        }
    };
    let xs_ref: Vec<&DenseMatrix> = xs.iter().collect();
    let stats = collect_stats(&xs_ref, has_bias, cfg.normalize)?;
    let ws_ref: Vec<&DenseMatrix> = ws.iter().collect();
    solve(&ws_ref, &stats, weights, cfg)
}

fn check_bundles(bundles: &[TaskBundle]) -> Result<()> {
    let first = bundles
        .first()
        .ok_or_else(|| Error::ArchitectureMismatch("no models to merge".into()))?;
    for b in &bundles[1..] {
        if !b.model.same_architecture(&first.model) {
            return Err(Error::ArchitectureMismatch(format!(
                "`{}` and `{}` differ in layer shapes, bias flags, or activations",
                first.task_name, b.task_name
            )));
        }
        if b.samples.rows() != first.model.input_dim() {
            return Err(Error::InvalidShape(format!(
                "samples of `{}` have {} rows, expected {}",
                b.task_name,
                b.samples.rows(),
                first.model.input_dim()
            )));
        }
    }
    Ok(())
}

fn capped_samples(bundles: &[TaskBundle], cfg: &MergeConfig) -> Vec<DenseMatrix> {
    bundles
        .iter()
        .map(|b| b.samples.leading_columns(cfg.max_samples_per_task))
        .collect()
}

fn merged_layer(template: &LinearLayer, weight: DenseMatrix) -> LinearLayer {
    LinearLayer {
        weight,
        ..template.clone()
    }
}

/// Dispatches on `cfg.method`.
pub fn merge(bundles: &[TaskBundle], cfg: &MergeConfig) -> Result<MergeOutcome> {
    match cfg.method {
        MergeMethod::Average => {
            cfg.validate()?;
            merge_average_with(bundles, cfg)
        }
        MergeMethod::RegMean => merge_simultaneous(bundles, cfg),
        MergeMethod::Com | MergeMethod::ComWeighted => merge_com(bundles, cfg),
    }
}

/// Elementwise mean of the task weights.
pub fn merge_average(bundles: &[TaskBundle]) -> Result<MergeOutcome> {
    merge_average_with(bundles, &MergeConfig::new(MergeMethod::Average))
}

fn merge_average_with(bundles: &[TaskBundle], cfg: &MergeConfig) -> Result<MergeOutcome> {
    check_bundles(bundles)?;
    let template = &bundles[0].model;
    let n = bundles.len() as f64;
    let mut layers = Vec::with_capacity(template.num_layers());
    for (l, layer) in template.layers().iter().enumerate() {
        let (r, c) = layer.weight.shape();
        let mut sum = DenseMatrix::zeros(r, c);
        for b in bundles {
            sum.add_scaled_assign(1.0, &b.model.layers()[l].weight)?;
        }
        layers.push(merged_layer(layer, sum.scale(1.0 / n)));
    }
    let merged = SequentialModel::new(template.input_dim(), layers)?;

    // Ω against each task's own activations, for comparison with regmean.
    let samples = capped_samples(bundles, cfg);
    let traces = own_traces(bundles, &samples)?;
    let mut per_layer_omega = Vec::with_capacity(merged.num_layers());
    for (l, layer) in merged.layers().iter().enumerate() {
        let xs: Vec<&DenseMatrix> = traces.iter().map(|t| &t[l]).collect();
        let stats = collect_stats(&xs, layer.has_bias, cfg.normalize)?;
        let ws: Vec<&DenseMatrix> = bundles.iter().map(|b| &b.model.layers()[l].weight).collect();
        per_layer_omega.push(omega_of(&layer.weight, &ws, &stats)?);
    }
    Ok(MergeOutcome {
        stats_provenance: provenance(&samples, merged.num_layers()),
        merged,
        per_layer_omega,
        per_layer_weights: Vec::new(),
    })
}

fn own_traces(bundles: &[TaskBundle], samples: &[DenseMatrix]) -> Result<Vec<Vec<DenseMatrix>>> {
    bundles
        .par_iter()
        .zip(samples.par_iter())
        .map(|(b, x)| Ok(b.model.forward_capture(x)?.per_layer_inputs))
        .collect()
}

fn provenance(samples: &[DenseMatrix], layers: usize) -> Vec<Vec<usize>> {
    let counts: Vec<usize> = samples.iter().map(DenseMatrix::cols).collect();
    vec![counts; layers]
}

/// Every layer solved independently on the tasks' own (pre-merge) activations.
pub fn merge_simultaneous(bundles: &[TaskBundle], cfg: &MergeConfig) -> Result<MergeOutcome> {
    cfg.validate()?;
    check_bundles(bundles)?;
    let template = &bundles[0].model;
    let samples = capped_samples(bundles, cfg);
    let traces = own_traces(bundles, &samples)?;
    let uniform = SensitivityWeights::uniform(bundles.len());

    let mut layers = Vec::with_capacity(template.num_layers());
    let mut per_layer_omega = Vec::with_capacity(template.num_layers());
    for (l, layer) in template.layers().iter().enumerate() {
        let xs: Vec<&DenseMatrix> = traces.iter().map(|t| &t[l]).collect();
        let stats = collect_stats(&xs, layer.has_bias, cfg.normalize)?;
        let ws: Vec<&DenseMatrix> = bundles.iter().map(|b| &b.model.layers()[l].weight).collect();
        let w_m = solve(&ws, &stats, &uniform, cfg)?;
        per_layer_omega.push(omega_of(&w_m, &ws, &stats)?);
        layers.push(merged_layer(layer, w_m));
    }
    Ok(MergeOutcome {
        merged: SequentialModel::new(template.input_dim(), layers)?,
        per_layer_omega,
        per_layer_weights: Vec::new(),
        stats_provenance: provenance(&samples, template.num_layers()),
    })
}

/// Chained merge: layers are solved front to back, each on inputs produced
/// by the already-merged prefix.
pub fn merge_com(bundles: &[TaskBundle], cfg: &MergeConfig) -> Result<MergeOutcome> {
    merge_com_observed(bundles, cfg, |_, _, _| {})
}

/// [`merge_com`] that reports, for every `(layer, task)`, the raw input
/// activations the layer solve consumed.
pub fn merge_com_observed(
    bundles: &[TaskBundle],
    cfg: &MergeConfig,
    mut observe: impl FnMut(usize, usize, &DenseMatrix),
) -> Result<MergeOutcome> {
    cfg.validate()?;
    check_bundles(bundles)?;
    let weighted = cfg.method == MergeMethod::ComWeighted;
    let template = &bundles[0].model;
    let samples = capped_samples(bundles, cfg);
    let num_layers = template.num_layers();

    let mut acts = samples.clone();
    let mut layers = Vec::with_capacity(num_layers);
    let mut per_layer_omega = Vec::with_capacity(num_layers);
    let mut per_layer_weights = Vec::new();
    for (l, layer) in template.layers().iter().enumerate() {
        for (i, x) in acts.iter().enumerate() {
            observe(l, i, x);
        }
        let xs: Vec<&DenseMatrix> = acts.iter().collect();
        let stats = collect_stats(&xs, layer.has_bias, cfg.normalize)?;
        let weights = if weighted {
            let grams: Vec<DenseMatrix> = stats.iter().map(|s| s.gram.clone()).collect();
            sensitivity_weights(&grams, cfg.weight_floor_rel)?
        } else {
            SensitivityWeights::uniform(bundles.len())
        };
        let ws: Vec<&DenseMatrix> = bundles.iter().map(|b| &b.model.layers()[l].weight).collect();
        let w_m = solve(&ws, &stats, &weights, cfg)?;
        per_layer_omega.push(omega_of(&w_m, &ws, &stats)?);
        let merged = merged_layer(layer, w_m);
        if l + 1 < num_layers {
            acts = acts
                .par_iter()
                .map(|x| merged.forward(x))
                .collect::<Result<_>>()?;
        }
        layers.push(merged);
        if weighted {
            per_layer_weights.push(weights);
        }
    }
    Ok(MergeOutcome {
        merged: SequentialModel::new(template.input_dim(), layers)?,
        per_layer_omega,
        per_layer_weights,
        stats_provenance: provenance(&samples, num_layers),
    })
}
