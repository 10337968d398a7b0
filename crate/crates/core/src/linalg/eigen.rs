use super::DenseMatrix;
use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius threshold at which a sweep loop stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition `A = Q·diag(values)·Qᵀ` of a symmetric matrix.
///
/// Eigenvalues are sorted ascending; column `k` of `vectors` belongs to
/// `values[k]`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    /// Cyclic Jacobi rotations on the symmetrized input.
    ///
    /// Only the symmetric part `(A + Aᵀ)/2` is used; callers decide how much
    /// asymmetry they accept before getting here.
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidShape(format!(
                "eigendecomposition needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut m = a.symmetrized();
        let mut q = DenseMatrix::identity(n);
        let target = JACOBI_TOLERANCE * m.frobenius_norm();

        let mut converged = false;
        for _ in 0..=JACOBI_MAX_SWEEPS {
            if off_diagonal_frobenius(&m) <= target {
                converged = true;
                break;
            }
            for p in 0..n {
                for r in (p + 1)..n {
                    rotate(&mut m, &mut q, p, r);
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
        let values = order.iter().map(|&i| m.get(i, i)).collect();
        let vectors = q.select_columns(&order);
        Ok(Self { values, vectors })
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// `Q·diag(f(λ))·Qᵀ`, symmetric by construction.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for (k, &s) in mapped.iter().enumerate() {
                    if s != 0.0 {
                        acc += self.vectors.get(i, k) * s * self.vectors.get(j, k);
                    }
                }
                out.set(i, j, acc);
                out.set(j, i, acc);
            }
        }
        out
    }
}

fn off_diagonal_frobenius(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m.get(i, j) * m.get(i, j);
            }
        }
    }
    acc.sqrt()
}

/// One Jacobi rotation zeroing `m[p][r]`, accumulated into `q`.
fn rotate(m: &mut DenseMatrix, q: &mut DenseMatrix, p: usize, r: usize) {
    let apr = m.get(p, r);
    if apr == 0.0 {
        return;
    }
    let app = m.get(p, p);
    let arr = m.get(r, r);
    let theta = (arr - app) / (2.0 * apr);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    // signum(0) is 1 in Rust, which gives t = 1 (a 45 degree rotation) as wanted.
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    let n = m.rows();
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkr = m.get(k, r);
        m.set(k, p, c * mkp - s * mkr);
        m.set(k, r, s * mkp + c * mkr);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mrk = m.get(r, k);
        m.set(p, k, c * mpk - s * mrk);
        m.set(r, k, s * mpk + c * mrk);
    }
    m.set(p, r, 0.0);
    m.set(r, p, 0.0);

    for k in 0..n {
        let qkp = q.get(k, p);
        let qkr = q.get(k, r);
        q.set(k, p, c * qkp - s * qkr);
        q.set(k, r, s * qkp + c * qkr);
    }
}
