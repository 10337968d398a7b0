//! Closed-form merge of a single linear layer from two tasks.

use chainmerge::merge::{self, MergeConfig, MergeMethod, SensitivityWeights};
use chainmerge::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> chainmerge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut random = |r, c| DenseMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let ws = vec![random(3, 4), random(3, 4)];
    let xs = vec![random(4, 30), random(4, 30)];

    let cfg = MergeConfig {
        lambda_rel: 0.0,
        normalize: false,
        ..MergeConfig::new(MergeMethod::RegMean)
    };
    let merged = merge::regmean_layer(&ws, &xs, &SensitivityWeights::uniform(2), &cfg)?;
    let mean = ws[0].add(&ws[1])?.scale(0.5);

    println!("objective at the closed form: {:.6}", merge::objective_omega(&merged, &ws, &xs)?);
    println!("objective at the plain mean:  {:.6}", merge::objective_omega(&mean, &ws, &xs)?);
    println!("merged weight:\n{merged:?}");
    Ok(())
}
