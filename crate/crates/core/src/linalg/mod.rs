//! Dense kernels behind the merge solver and the covariate-shift metric.
//!
//! Everything here is a pure function of its inputs and runs in `f64`.
//! Symmetric eigenproblems go through the cyclic Jacobi solver in
//! [`eigen`]; its output is deterministic for a given input.

pub mod eigen;
mod matrix;

pub use eigen::SymmetricEigen;
pub use matrix::DenseMatrix;

use crate::error::{Error, Result};

/// Default relative Tikhonov strength (multiplies the mean eigenvalue).
pub const DEFAULT_LAMBDA_REL: f64 = 1e-4;
/// Default relative cutoff below which an eigenvalue counts as zero.
pub const DEFAULT_RANK_EPS: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-9;

/// Gram matrix `X̃ X̃ᵀ` of a `d×n` sample matrix (samples are columns).
///
/// With `normalize` set every column is scaled to unit L2 norm first, so the
/// entries become cosine similarities between features. All-zero columns stay
/// zero.
pub fn gram(x: &DenseMatrix, normalize: bool) -> Result<DenseMatrix> {
    let (d, n) = x.shape();
    if d == 0 || n == 0 {
        return Err(Error::InvalidShape(format!("gram of a {d}x{n} matrix")));
    }
    let scaled;
    let x = if normalize {
        scaled = normalize_columns(x);
        &scaled
    } else {
        x
    };
    let mut g = DenseMatrix::zeros(d, d);
    for p in 0..d {
        let rp = x.row(p);
        for q in p..d {
            let v: f64 = rp.iter().zip(x.row(q)).map(|(a, b)| a * b).sum();
            g.set(p, q, v);
            g.set(q, p, v);
        }
    }
    Ok(g)
}

/// Scales each column to unit L2 norm; zero columns are left untouched.
pub fn normalize_columns(x: &DenseMatrix) -> DenseMatrix {
    let (d, n) = x.shape();
    let mut norms = vec![0.0f64; n];
    for r in 0..d {
        for (acc, v) in norms.iter_mut().zip(x.row(r)) {
            *acc += v * v;
        }
    }
    let inv: Vec<f64> = norms
        .iter()
        .map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 1.0 })
        .collect();
    let mut out = x.clone();
    for r in 0..d {
        for (v, s) in out.row_mut(r).iter_mut().zip(&inv) {
            *v *= s;
        }
    }
    out
}

fn require_square(g: &DenseMatrix, what: &str) -> Result<()> {
    if g.is_square() {
        Ok(())
    } else {
        Err(Error::InvalidShape(format!(
            "{what} needs a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )))
    }
}

fn require_symmetric(g: &DenseMatrix) -> Result<()> {
    let asym = g.max_asymmetry();
    if asym > SYMMETRY_TOL * g.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Regularized Moore–Penrose inverse of a symmetric PSD matrix.
///
/// With `G = QΛQᵀ` and `λ_eff = lambda_rel · trace(G) / d`, each eigenvalue
/// is replaced by `1 / (λ_k + λ_eff)` when `λ_k + λ_eff > rank_eps · λ_max`
/// and by zero otherwise.
pub fn pinv_tikhonov(g: &DenseMatrix, lambda_rel: f64, rank_eps: f64) -> Result<DenseMatrix> {
    require_square(g, "pinv_tikhonov")?;
    require_symmetric(g)?;
    let d = g.rows();
    if d == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let lambda_eff = lambda_rel * g.trace() / d as f64;
    let eig = SymmetricEigen::new(g)?;
    let cutoff = rank_eps * eig.max_value();
    Ok(eig.reconstruct_with(|v| {
        let shifted = v + lambda_eff;
        if shifted > cutoff && shifted > 0.0 {
            1.0 / shifted
        } else {
            0.0
        }
    }))
}

/// Symmetric PSD square root. Eigenvalues slightly below zero (within
/// `1e-9` of the spectral scale) are clipped to zero.
pub fn sqrtm_psd(a: &DenseMatrix) -> Result<DenseMatrix> {
    require_square(a, "sqrtm_psd")?;
    require_symmetric(a)?;
    let eig = SymmetricEigen::new(a)?;
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.min_value();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min, scale });
    }
    Ok(eig.reconstruct_with(|v| v.max(0.0).sqrt()))
}

/// Spectral condition number of a symmetric PSD matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Conditioning {
    Finite(f64),
    /// The matrix is rank-deficient at the requested tolerance.
    Unbounded,
}

impl Conditioning {
    pub fn value(self) -> Option<f64> {
        match self {
            Conditioning::Finite(k) => Some(k),
            Conditioning::Unbounded => None,
        }
    }
}

/// `λ_max / λ_min`, with the default rank tolerance.
pub fn condition_number(g: &DenseMatrix) -> Result<Conditioning> {
    condition_number_with(g, DEFAULT_RANK_EPS)
}

pub fn condition_number_with(g: &DenseMatrix, rank_eps: f64) -> Result<Conditioning> {
    require_square(g, "condition_number")?;
    require_symmetric(g)?;
    let eig = SymmetricEigen::new(g)?;
    let (lo, hi) = (eig.min_value(), eig.max_value());
    if hi <= 0.0 || lo <= rank_eps * hi {
        return Ok(Conditioning::Unbounded);
    }
    Ok(Conditioning::Finite(hi / lo))
}

/// Sum of `|G_pq|` over the strict upper triangle.
pub fn offdiag_norm(g: &DenseMatrix) -> Result<f64> {
    require_square(g, "offdiag_norm")?;
    let n = g.rows();
    let mut acc = 0.0;
    for p in 0..n {
        for &v in &g.row(p)[p + 1..] {
            acc += v.abs();
        }
    }
    Ok(acc)
}
