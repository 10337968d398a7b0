//! Layer-by-layer merging versus merging every layer from the original
//! activations, on small random tanh networks.

use chainmerge::merge::{self, MergeConfig, MergeMethod, TaskBundle};
use chainmerge::{ActivationKind, DenseMatrix, LinearLayer, SequentialModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn network(rng: &mut ChaCha8Rng, dims: &[usize]) -> chainmerge::Result<SequentialModel> {
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let weight = DenseMatrix::from_fn(w[1], w[0] + 1, |_, _| rng.random_range(-1.0..1.0));
            let act = if l + 2 == dims.len() { ActivationKind::Identity } else { ActivationKind::Tanh };
            LinearLayer::new(format!("fc{}", l + 1), weight, true, act)
        })
        .collect();
    SequentialModel::new(dims[0], layers)
}

fn main() -> chainmerge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dims = [8, 16, 16, 16, 4];
    let base = network(&mut rng, &dims)?;
    let bundles = (0..3)
        .map(|i| {
            // each task nudges the shared base differently
            let mut model = base.clone();
            for l in 0..model.num_layers() {
                let w = &model.layers()[l].weight;
                let noise = DenseMatrix::from_fn(w.rows(), w.cols(), |_, _| 0.3 * rng.random_range(-1.0..1.0));
                let nudged = w.add(&noise)?;
                model = model.with_weight(l, nudged)?;
            }
            let x = DenseMatrix::from_fn(8, 64, |_, _| rng.random_range(-1.0..1.0));
            TaskBundle::new(format!("task{i}"), model, x)
        })
        .collect::<chainmerge::Result<Vec<_>>>()?;

    let cfg = MergeConfig::new(MergeMethod::Com);
    let simultaneous = merge::merge_simultaneous(&bundles, &cfg)?;
    let mut observed = Vec::new();
    let chained = merge::merge_com_observed(&bundles, &cfg, |l, i, x| observed.push((l, i, x.clone())))?;

    let output_error = |merged: &SequentialModel| -> chainmerge::Result<f64> {
        let mut total = 0.0;
        for b in &bundles {
            let want = b.model.forward(&b.samples)?;
            let got = merged.forward(&b.samples)?;
            total += got.sub(&want)?.frobenius_norm().powi(2);
        }
        Ok(total)
    };
    println!("squared output error, simultaneous: {:.4}", output_error(&simultaneous.merged)?);
    println!("squared output error, chained:      {:.4}", output_error(&chained.merged)?);

    let mut worst = 0.0f64;
    for (l, i, x) in &observed {
        let realized = &chained.merged.forward_capture(&bundles[*i].samples)?.per_layer_inputs[*l];
        worst = worst.max(realized.sub(x)?.max_abs());
    }
    println!("largest gap between merge-time and realized layer inputs: {worst:e}");
    Ok(())
}
