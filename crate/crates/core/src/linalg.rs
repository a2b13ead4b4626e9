//! Dense linear-algebra kernels sized for state-space work.
//!
//! State dimensions here are small (a handful of trend/regression/parental
//! coefficients per series; cross-series matrices up to a few hundred), so a
//! cyclic Jacobi eigensolver and an LU with partial pivoting cover everything
//! without pulling in a LAPACK backend. All routines own their numerical
//! guarantees: the eigensolver is the basis for the positive-semidefinite
//! repairs the filters rely on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{CoreError, Result};

/// Make a matrix exactly symmetric by averaging with its transpose.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(values, vectors)` with `a = V diag(values) Vᵀ`; eigenvectors are
/// the columns of `V`. Accuracy is ample for the small, well-scaled matrices
/// used in the filters.
pub fn sym_eigen(a: &ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut a = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    if n <= 1 {
        return (a.diag().to_owned(), v);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        let scale: f64 = a.diag().iter().map(|d| d * d).sum::<f64>() + off;
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = 0.5 * (a[[q, q]] - a[[p, p]]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diag().to_owned(), v)
}

/// Project a nearly-PSD symmetric matrix back onto the PSD cone.
///
/// Tiny negative eigenvalues (roundoff from rank-one downdates) are clipped
/// to zero; a gross violation is reported as a numeric error because it means
/// a recursion, not roundoff, went wrong.
pub fn psd_project(a: &ArrayView2<f64>, context: &str) -> Result<Array2<f64>> {
    let mut sym = a.to_owned();
    symmetrize(&mut sym);
    let (vals, vecs) = sym_eigen(&sym.view());
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gross = 1e-8 * top.max(1e-300);
    let mut clipped = vals.clone();
    for v in clipped.iter_mut() {
        if *v < -gross {
            return Err(CoreError::numeric(format!(
                "{context}: scale matrix has eigenvalue {v:.3e}, beyond roundoff for magnitude {top:.3e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let mut out = Array2::<f64>::zeros(sym.raw_dim());
    let n = sym.nrows();
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += vecs[[i, k]] * clipped[k] * vecs[[j, k]];
            }
            out[[i, j]] = acc;
            out[[j, i]] = acc;
        }
    }
    Ok(out)
}

/// A factor `L` with `L Lᵀ = A` for symmetric PSD `A`, built from the
/// eigendecomposition (columns are eigenvectors scaled by √eigenvalue).
/// Negative roundoff eigenvalues are treated as zero.
pub fn psd_factor(a: &ArrayView2<f64>) -> Array2<f64> {
    let mut sym = a.to_owned();
    symmetrize(&mut sym);
    let (vals, mut vecs) = sym_eigen(&sym.view());
    for (k, v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..vecs.nrows() {
            vecs[[i, k]] *= s;
        }
    }
    vecs
}

/// LU decomposition with partial pivoting.
///
/// Factorization never fails; singularity shows up as a zero pivot and is
/// reported by `solve`, while `log_abs_det` returns −∞ so callers can treat
/// the sample as zero-weight.
pub struct Lu {
    lu: Array2<f64>,
    pivots: Vec<usize>,
    n: usize,
}

impl Lu {
    pub fn factor(a: &ArrayView2<f64>) -> Lu {
        let n = a.nrows();
        debug_assert_eq!(n, a.ncols());
        let mut lu = a.to_owned();
        let mut pivots = Vec::with_capacity(n);
        for col in 0..n {
            let mut pivot = col;
            let mut best = lu[[col, col]].abs();
            for row in (col + 1)..n {
                let mag = lu[[row, col]].abs();
                if mag > best {
                    best = mag;
                    pivot = row;
                }
            }
            pivots.push(pivot);
            if pivot != col {
                for k in 0..n {
                    lu.swap([col, k], [pivot, k]);
                }
            }
            let diag = lu[[col, col]];
            if diag == 0.0 {
                continue;
            }
            for row in (col + 1)..n {
                let factor = lu[[row, col]] / diag;
                lu[[row, col]] = factor;
                for k in (col + 1)..n {
                    lu[[row, k]] -= factor * lu[[col, k]];
                }
            }
        }
        Lu { lu, pivots, n }
    }

    /// log |det A|; −∞ when the matrix is singular to working precision.
    pub fn log_abs_det(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let d = self.lu[[i, i]].abs();
            if d == 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += d.ln();
        }
        acc
    }

    pub fn is_singular(&self) -> bool {
        (0..self.n).any(|i| self.lu[[i, i]] == 0.0)
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &ArrayView1<f64>) -> Result<Array1<f64>> {
        if self.is_singular() {
            return Err(CoreError::numeric("LU solve on a singular matrix".to_string()));
        }
        let mut x = b.to_owned();
        for i in 0..self.n {
            x.swap(i, self.pivots[i]);
        }
        for i in 1..self.n {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.lu[[i, k]] * x[k];
            }
            x[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = x[i];
            for k in (i + 1)..self.n {
                acc -= self.lu[[i, k]] * x[k];
            }
            x[i] = acc / self.lu[[i, i]];
        }
        Ok(x)
    }

    /// Inverse of `A`, column by column.
    pub fn inverse(&self) -> Result<Array2<f64>> {
        let mut inv = Array2::<f64>::zeros((self.n, self.n));
        let mut e = Array1::<f64>::zeros(self.n);
        for col in 0..self.n {
            e.fill(0.0);
            e[col] = 1.0;
            let x = self.solve(&e.view())?;
            inv.column_mut(col).assign(&x);
        }
        Ok(inv)
    }
}

/// Quadratic form fᵀ M f.
pub fn quad_form(f: &ArrayView1<f64>, m: &ArrayView2<f64>) -> f64 {
    let mf = m.dot(f);
    f.dot(&mf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn test_sym_eigen_known_2x2() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = sym_eigen(&a.view());
        let mut sorted = vals.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        assert_abs_diff_eq!(sorted[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sorted[1], 3.0, epsilon = 1e-12);
        // Reconstruct.
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(recon[[i, j]], a[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn test_psd_project_clips_roundoff() {
        let a = array![[1.0, 0.0], [0.0, -1e-12]];
        let fixed = psd_project(&a.view(), "test").unwrap();
        let (vals, _) = sym_eigen(&fixed.view());
        assert!(vals.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn test_psd_project_rejects_gross_violation() {
        let a = array![[1.0, 0.0], [0.0, -0.5]];
        assert!(psd_project(&a.view(), "test").is_err());
    }

    #[test]
    fn test_psd_factor_reconstructs() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 3.0, 0.2], [0.6, 0.2, 1.0]];
        let l = psd_factor(&a.view());
        let recon = l.dot(&l.t());
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(recon[[i, j]], a[[i, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn test_lu_det_and_solve() {
        let a = array![[2.0, 1.0, 1.0], [4.0, -6.0, 0.0], [-2.0, 7.0, 2.0]];
        let lu = Lu::factor(&a.view());
        // det = -16 for this classic example.
        assert_abs_diff_eq!(lu.log_abs_det(), 16.0f64.ln(), epsilon = 1e-12);
        let b = array![5.0, -2.0, 9.0];
        let x = lu.solve(&b.view()).unwrap();
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-10);
        }
        let inv = lu.inverse().unwrap();
        let eye = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(eye[[i, j]], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn test_lu_singular_reports() {
        let a = array![[1.0, 2.0], [2.0, 4.0]];
        let lu = Lu::factor(&a.view());
        assert!(lu.is_singular());
        assert_eq!(lu.log_abs_det(), f64::NEG_INFINITY);
        assert!(lu.solve(&array![1.0, 1.0].view()).is_err());
    }
}
