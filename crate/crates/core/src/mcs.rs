//! Merging covariate shift: how far the inputs a layer receives in the merged
//! network drift from the inputs it received in the task's own network.
//!
//! Both activation sets are summarized by a Gaussian (sample mean, unbiased
//! covariance) and compared with the closed-form Fréchet distance
//!
//! ```text
//! ‖μ − μ̂‖² + tr(Σ + Σ̂ − 2 (Σ̂^½ Σ Σ̂^½)^½)
//! ```
//!
//! which is the squared 2-Wasserstein distance between the two Gaussians.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::merge::TaskBundle;
use crate::model::SequentialModel;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: Vec<f64>,
    pub cov: DenseMatrix,
    pub sample_count: usize,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean and unbiased (`n − 1`) covariance of the columns of `x`.
pub fn gaussian_stats(x: &DenseMatrix) -> Result<GaussianStats> {
    let (d, n) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mean: Vec<f64> = (0..d)
        .map(|r| x.row(r).iter().sum::<f64>() / n as f64)
        .collect();
    let centered = DenseMatrix::from_fn(d, n, |r, c| x.get(r, c) - mean[r]);
    let cov = if d == 0 {
        DenseMatrix::zeros(0, 0)
    } else {
        linalg::gram(&centered, false)?.scale(1.0 / (n - 1) as f64)
    };
    Ok(GaussianStats {
        mean,
        cov,
        sample_count: n,
    })
}

/// Squared 2-Wasserstein distance between two Gaussians, clipped at zero.
///
/// `b` plays the role of the post-merge distribution (its square root
/// sandwiches `a`'s covariance). Bitwise identical inputs return exactly 0.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() || a.cov.shape() != b.cov.shape() {
        return Err(Error::InvalidShape(format!(
            "Gaussians of dimension {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.mean == b.mean && a.cov == b.cov {
        return Ok(0.0);
    }
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let root_b = linalg::sqrtm_psd(&b.cov.symmetrized())?;
    let inner = root_b.matmul(&a.cov)?.matmul(&root_b)?.symmetrized();
    let cross = linalg::sqrtm_psd(&inner)?;
    let raw = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    if raw < 0.0 {
        debug!("frechet distance {raw:e} clipped to 0");
    }
    Ok(raw.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShift {
    /// One distance per task, in bundle order.
    pub per_task: Vec<f64>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsReport {
    pub per_layer: Vec<LayerShift>,
    pub grand_total: f64,
    pub method_label: String,
}

/// Shift between each task's own layer inputs and the merged model's layer
/// inputs, for every layer and task. Layer 0 compares raw data to itself and
/// is always 0.
pub fn mcs_report(
    bundles: &[TaskBundle],
    merged: &SequentialModel,
    method_label: impl Into<String>,
) -> Result<McsReport> {
    for b in bundles {
        if !b.model.same_architecture(merged) {
            return Err(Error::ArchitectureMismatch(format!(
                "merged model does not match `{}`",
                b.task_name
            )));
        }
    }
    // [task][layer]
    let distances: Vec<Vec<f64>> = bundles
        .par_iter()
        .map(|b| {
            let own = b.model.forward_capture(&b.samples)?;
            let hat = merged.forward_capture(&b.samples)?;
            own.per_layer_inputs
                .iter()
                .zip(&hat.per_layer_inputs)
                .map(|(x, x_hat)| frechet_distance(&gaussian_stats(x)?, &gaussian_stats(x_hat)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let per_layer: Vec<LayerShift> = (0..merged.num_layers())
        .map(|l| {
            let per_task: Vec<f64> = distances.iter().map(|d| d[l]).collect();
            LayerShift {
                total: per_task.iter().sum(),
                per_task,
            }
        })
        .collect();
    Ok(McsReport {
        grand_total: per_layer.iter().map(|l| l.total).sum(),
        per_layer,
        method_label: method_label.into(),
    })
}
