//! Dense linear-algebra kernels shared by the screening and
//! orthogonalization stages: Gram-matrix assembly, a symmetric
//! positive-definite Cholesky factorization with triangular solves, and a
//! rank-revealing least-squares residual fit.
//!
//! Everything here is plain `f64` on contiguous storage. The matrices are
//! small (`n x n` with `n` the sample size), so a straightforward
//! factorization is both fast enough and bit-reproducible across thread
//! counts.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};

/// Gram matrix `Z Z^T` of the column-bound design `Z = [M extras...]`,
/// accumulated without materializing `Z` itself.
///
/// `mediators` is `n x p`; each extra is a length-`n` column appended to the
/// design (exposure, then covariates).
pub fn gram(mediators: &Array2<f64>, extras: &[ArrayView1<f64>]) -> Array2<f64> {
    let mut g = mediators.dot(&mediators.t());
    let n = g.nrows();
    for col in extras {
        debug_assert_eq!(col.len(), n);
        for i in 0..n {
            let ci = col[i];
            let mut row = g.row_mut(i);
            for j in 0..n {
                row[j] += ci * col[j];
            }
        }
    }
    g
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// The factor is stored row-major; solves run forward/backward substitution
/// over contiguous rows.
pub struct Cholesky {
    l: Array2<f64>,
    n: usize,
}

impl Cholesky {
    /// Factors `a` in place. Fails when a pivot falls below
    /// `n * eps * max_diag`, which covers both indefinite inputs and
    /// numerically singular positive-semidefinite ones.
    pub fn factor(mut a: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky requires a square matrix");
        let buf = a
            .as_slice_mut()
            .expect("gram matrices are built in standard layout");
        let mut max_diag = 0.0f64;
        for i in 0..n {
            max_diag = max_diag.max(buf[i * n + i].abs());
        }
        let tol = max_diag * (n as f64) * f64::EPSILON;
        for i in 0..n {
            let (head, tail) = buf.split_at_mut(i * n);
            let row_i = &mut tail[..=i];
            for j in 0..i {
                let row_j = &head[j * n..j * n + j];
                let mut s = 0.0;
                for k in 0..j {
                    s += row_i[k] * row_j[k];
                }
                row_i[j] = (row_i[j] - s) / head[j * n + j];
            }
            let mut s = 0.0;
            for k in 0..i {
                s += row_i[k] * row_i[k];
            }
            let d = row_i[i] - s;
            if !(d > tol) || !d.is_finite() {
                return Err(Error::numerical(
                    "linalg",
                    format!("matrix is not positive definite at pivot {} (value {d:.3e})", i + 1),
                ));
            }
            row_i[i] = d.sqrt();
        }
        Ok(Cholesky { l: a, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` for the factored `A = L L^T`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = b.iter().copied().collect();
        self.solve_slice(&mut x);
        Array1::from(x)
    }

    /// In-place solve on a mutable slice.
    pub fn solve_slice(&self, x: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n);
        let l = self.l.as_slice().expect("factor is standard layout");
        // forward: L y = b
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let mut s = 0.0;
            for k in 0..i {
                s += row[k] * x[k];
            }
            x[i] = (x[i] - s) / l[i * n + i];
        }
        // backward: L^T x = y, expressed with contiguous rows of L
        for i in (0..n).rev() {
            let xi = x[i] / l[i * n + i];
            x[i] = xi;
            let row = &l[i * n..i * n + i];
            for k in 0..i {
                x[k] -= row[k] * xi;
            }
        }
    }
}

/// Outcome of a rank-revealing least-squares fit.
pub struct RssFit {
    /// Residual sum of squares of `y` against the accepted columns.
    pub rss: f64,
    /// Number of columns actually fitted.
    pub rank: usize,
    /// Positions (into the input column list) that were dropped as
    /// numerically collinear.
    pub dropped: Vec<usize>,
}

/// Residual sum of squares of `y` regressed on `cols`, dropping collinear
/// columns past the first `protected` ones.
///
/// Uses twice-iterated Gram–Schmidt; a column whose residual norm falls
/// below `1e-8` of its original norm is dropped. A collinear column within
/// the protected prefix is an error because those columns (exposure,
/// covariates, intercept) must stay in the model.
pub fn ols_rss_dropping(
    cols: &[ArrayView1<f64>],
    protected: usize,
    y: ArrayView1<f64>,
) -> Result<RssFit> {
    let n = y.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    let mut dropped = Vec::new();
    for (idx, col) in cols.iter().enumerate() {
        assert_eq!(col.len(), n);
        let orig_norm2: f64 = col.iter().map(|v| v * v).sum();
        let mut v: Vec<f64> = col.iter().copied().collect();
        for _ in 0..2 {
            for q in &basis {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm2: f64 = v.iter().map(|x| x * x).sum();
        if norm2 <= orig_norm2 * 1e-16 || orig_norm2 == 0.0 {
            if idx < protected {
                return Err(Error::numerical(
                    "refit",
                    format!("design column {} is collinear and cannot be dropped", idx + 1),
                ));
            }
            dropped.push(idx);
            continue;
        }
        let inv = norm2.sqrt().recip();
        for vi in &mut v {
            *vi *= inv;
        }
        basis.push(v);
    }
    let mut r: Vec<f64> = y.iter().copied().collect();
    for q in &basis {
        let c: f64 = q.iter().zip(&r).map(|(a, b)| a * b).sum();
        for (ri, qi) in r.iter_mut().zip(q) {
            *ri -= c * qi;
        }
    }
    let rss: f64 = r.iter().map(|x| x * x).sum();
    Ok(RssFit {
        rss: rss.max(0.0),
        rank: basis.len(),
        dropped,
    })
}

/// Copies a matrix into column-major storage so per-column access is
/// contiguous. Returns the input unchanged when it already is.
pub fn to_column_major(a: Array2<f64>) -> Array2<f64> {
    if a.t().is_standard_layout() {
        return a;
    }
    let (n, p) = a.dim();
    let mut out = Array2::zeros((n, p).f());
    out.assign(&a);
    out
}

/// `A^T b` for a column-major `A`, returned as a dense vector.
pub fn transpose_matvec(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    a.t().dot(&b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let chol = Cholesky::factor(a.clone()).unwrap();
        let b = array![1.0, -2.0, 0.5];
        let x = chol.solve(b.view());
        let back = a.dot(&x);
        for i in 0..3 {
            assert_relative_eq!(back[i], b[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(Cholesky::factor(a).is_err());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(Cholesky::factor(a).is_err());
    }

    #[test]
    fn gram_matches_explicit_product() {
        let m = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]];
        let x = array![1.0, 1.0, -1.0];
        let g = gram(&m, &[x.view()]);
        // Z = [m x], G = Z Z^T computed by hand for row pairs.
        let z = array![[1.0, 2.0, 1.0], [0.5, -1.0, 1.0], [3.0, 0.0, -1.0]];
        let expect = z.dot(&z.t());
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(g[[i, j]], expect[[i, j]], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn rss_dropping_detects_duplicate_column() {
        let c1 = array![1.0, 2.0, 3.0, 4.0];
        let c2 = array![2.0, 4.0, 6.0, 8.0];
        let c3 = array![1.0, 0.0, 0.0, 1.0];
        let y = array![1.0, 1.0, 2.0, 2.0];
        let fit = ols_rss_dropping(&[c1.view(), c2.view(), c3.view()], 1, y.view()).unwrap();
        assert_eq!(fit.dropped, vec![1]);
        assert_eq!(fit.rank, 2);
    }

    #[test]
    fn rss_dropping_protects_prefix() {
        let c1 = array![1.0, 2.0, 3.0];
        let c2 = array![2.0, 4.0, 6.0];
        let y = array![1.0, 1.0, 2.0];
        let err = ols_rss_dropping(&[c1.view(), c2.view()], 2, y.view());
        assert!(err.is_err());
    }

    #[test]
    fn rss_of_exact_fit_is_zero() {
        let c1 = array![1.0, 0.0, 1.0, 2.0];
        let c2 = array![0.0, 1.0, 1.0, 0.0];
        let y = &c1 * 2.0 + &c2 * 3.0;
        let fit = ols_rss_dropping(&[c1.view(), c2.view()], 0, y.view()).unwrap();
        assert!(fit.rss < 1e-20);
    }
}
