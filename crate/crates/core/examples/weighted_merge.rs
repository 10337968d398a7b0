//! Sensitivity-weighted chained merging: tasks whose layer inputs have more
//! correlated features get a larger say in that layer.

use chainmerge::merge::{self, MergeConfig, MergeMethod, TaskBundle};
use chainmerge::{ActivationKind, DenseMatrix, LinearLayer, SequentialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> chainmerge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bundles = Vec::new();
    for (i, correlation) in [0.0, 0.5, 0.95].into_iter().enumerate() {
        let layers = vec![
            LinearLayer::new("fc1", DenseMatrix::from_fn(6, 5, |_, _| rng.random_range(-1.0..1.0)), true, ActivationKind::Relu),
            LinearLayer::new("fc2", DenseMatrix::from_fn(2, 7, |_, _| rng.random_range(-1.0..1.0)), true, ActivationKind::Identity),
        ];
        let model = SequentialModel::new(4, layers)?;
        let x = DenseMatrix::from_fn(4, 50, |_, _| rng.random_range(-1.0..1.0));
        // blend every feature toward the first one
        let x = DenseMatrix::from_fn(4, 50, |r, c| (1.0 - correlation) * x.get(r, c) + correlation * x.get(0, c));
        bundles.push(TaskBundle::new(format!("corr{i}"), model, x)?);
    }

    let outcome = merge::merge(&bundles, &MergeConfig::new(MergeMethod::ComWeighted))?;
    for (l, w) in outcome.per_layer_weights.iter().enumerate() {
        let total: f64 = w.per_task.iter().sum();
        let shares: Vec<String> = w.per_task.iter().map(|v| format!("{:.3}", v / total)).collect();
        println!("layer {}: task shares {}", l + 1, shares.join(", "));
    }
    Ok(())
}
