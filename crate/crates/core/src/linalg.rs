//! Small dense helpers shared by the filter, the solver and the analysis code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_abs_diag(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Lower-triangular factor `L` with `L Lᵀ = A` for a symmetric positive
/// semidefinite `A`.
///
/// Pivots that vanish (relative to the largest diagonal entry) produce a zero
/// column instead of a failure, so rank-deficient covariances such as `P = 0`
/// factor exactly. Returns an error when a pivot is clearly negative or when
/// the zeroed columns leave a reconstruction error.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = max_abs_diag(a).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut zeroed = false;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        } else if d >= -1e3 * tol {
            zeroed = true;
        } else {
            return Err(Error::Degenerate(format!("negative pivot {d:e} at index {j} in Cholesky factorization")));
        }
    }
    if zeroed {
        let err = (&l * l.transpose() - a).abs().max();
        if err > 1e-9 * scale {
            return Err(Error::Degenerate(format!("semidefinite Cholesky reconstruction error {err:e}")));
        }
    }
    Ok(l)
}

/// Dense symmetric positive definite factorization on a packed row-major
/// lower triangle. Inner loops are contiguous dot products, which is what makes
/// the interior-point normal equations fast enough for a 96-step horizon.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    // row i occupies [i*(i+1)/2 .. i*(i+1)/2 + i + 1]
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factor the lower triangle of `a` (row-major, `n*n`).
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * (n + 1) / 2];
        for i in 0..n {
            let ri = i * (i + 1) / 2;
            for j in 0..=i {
                let rj = j * (j + 1) / 2;
                let dot: f64 = {
                    let (li, lj) = (&l[ri..ri + j], &l[rj..rj + j]);
                    li.iter().zip(lj).map(|(x, y)| x * y).sum()
                };
                let v = a[i * n + j] - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return None;
                    }
                    l[ri + i] = v.sqrt();
                } else {
                    l[ri + j] = v / l[rj + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let ri = i * (i + 1) / 2;
            let dot: f64 = self.l[ri..ri + i].iter().zip(&b[..i]).map(|(x, y)| x * y).sum();
            b[i] = (b[i] - dot) / self.l[ri + i];
        }
        for i in (0..n).rev() {
            b[i] /= self.l[i * (i + 1) / 2 + i];
            let bi = b[i];
            let ri = i * (i + 1) / 2;
            for (k, lik) in self.l[ri..ri + i].iter().enumerate() {
                b[k] -= lik * bi;
            }
        }
    }
}

pub fn dvec(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}
