#![allow(dead_code)]

use chainmerge::merge::TaskBundle;
use chainmerge::{ActivationKind, DenseMatrix, LinearLayer, SequentialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random MLP with biases on every layer; `dims` lists input, hidden and
/// output widths. The last layer has no activation.
pub fn mlp(dims: &[usize], act: ActivationKind, rng: &mut ChaCha8Rng) -> SequentialModel {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let last = l + 2 == dims.len();
            let weight = uniform(w[1], w[0] + 1, rng);
            LinearLayer::new(
                format!("l{l}"),
                weight,
                true,
                if last { ActivationKind::Identity } else { act },
            )
        })
        .collect();
    SequentialModel::new(dims[0], layers).unwrap()
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute error when `b` is zero.
pub fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let diff = a.sub(b).unwrap().frobenius_norm();
    let scale = b.frobenius_norm();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn bundles_from(models: &[SequentialModel], samples: &[DenseMatrix]) -> Vec<TaskBundle> {
    models
        .iter()
        .zip(samples)
        .enumerate()
        .map(|(i, (m, x))| TaskBundle::new(format!("task{i}"), m.clone(), x.clone()).unwrap())
        .collect()
}

/// Largest per-layer relative weight error between two models.
pub fn max_layer_err(a: &SequentialModel, b: &SequentialModel) -> f64 {
    a.layers()
        .iter()
        .zip(b.layers())
        .map(|(x, y)| rel_err(&x.weight, &y.weight))
        .fold(0.0, f64::max)
}
