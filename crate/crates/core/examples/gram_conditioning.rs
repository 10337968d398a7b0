//! Gram matrices, their conditioning, and the regularized pseudo-inverse.

use chainmerge::linalg::{self, DEFAULT_LAMBDA_REL, DEFAULT_RANK_EPS};
use chainmerge::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> chainmerge::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = DenseMatrix::from_fn(6, 40, |_, _| rng.random_range(-1.0..1.0));

    // a second copy whose last feature nearly duplicates the first
    let mut skewed = x.clone();
    for c in 0..x.cols() {
        skewed.set(5, c, x.get(0, c) + 1e-4 * x.get(5, c));
    }

    for (label, m) in [("independent features", &x), ("near-duplicate feature", &skewed)] {
        for normalize in [false, true] {
            let g = linalg::gram(m, normalize)?;
            println!(
                "{label:24} normalize={normalize:5}  kappa={:10.3e}  offdiag={:8.3}",
                linalg::condition_number(&g)?.value().unwrap_or(f64::INFINITY),
                linalg::offdiag_norm(&g)?,
            );
        }
    }

    let g = linalg::gram(&skewed, false)?;
    let inv = linalg::pinv_tikhonov(&g, DEFAULT_LAMBDA_REL, DEFAULT_RANK_EPS)?;
    let residual = g.matmul(&inv)?.sub(&DenseMatrix::identity(6))?.frobenius_norm();
    println!("‖G·pinv(G) − I‖_F with default regularization: {residual:.3e}");
    let exact = linalg::pinv_tikhonov(&g, 0.0, DEFAULT_RANK_EPS)?;
    let residual = g.matmul(&exact)?.sub(&DenseMatrix::identity(6))?.frobenius_norm();
    println!("‖G·pinv(G) − I‖_F without regularization:    {residual:.3e}");
    Ok(())
}
