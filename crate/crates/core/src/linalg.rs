//! Dense kernels used by the solvers.
//!
//! Matrix-vector products are written as plain loops with a fixed summation
//! order so that solver iterates are reproducible bit-for-bit. Decompositions
//! go through `faer` with sequential execution for the same reason.

use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::{dyn_stack::MemBuffer, dyn_stack::MemStack, Mat, Par};
use ndarray::Array2;

use crate::error::{Error, Result};

/// `A x`, each entry summed left to right.
pub fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    a.rows()
        .into_iter()
        .map(|row| {
            let mut acc = 0.0;
            for (&aij, &xj) in row.iter().zip(x) {
                acc += aij * xj;
            }
            acc
        })
        .collect()
}

/// `A^T r`, each entry summed over rows in increasing row order.
pub fn matvec_t(a: &Array2<f64>, r: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), r.len());
    let mut out = vec![0.0; a.ncols()];
    for (row, &ri) in a.rows().into_iter().zip(r) {
        for (o, &aij) in out.iter_mut().zip(row.iter()) {
            *o += aij * ri;
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn column_norms(a: &Array2<f64>) -> Vec<f64> {
    let mut sq = vec![0.0; a.ncols()];
    for row in a.rows() {
        for (s, &v) in sq.iter_mut().zip(row.iter()) {
            *s += v * v;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

/// Column-major copy: row `j` of the result is column `j` of `a`.
pub fn columns_contiguous(a: &Array2<f64>) -> Array2<f64> {
    a.t().as_standard_layout().into_owned()
}

pub fn to_faer(a: &Array2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// All `min(M, N)` singular values, descending.
pub fn singular_values(a: &Array2<f64>) -> Result<Vec<f64>> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let fa = to_faer(a);
    let (m, n) = (a.nrows(), a.ncols());
    let mut s = faer::diag::Diag::<f64>::zeros(m.min(n));
    let par = Par::Seq;
    let mut buf = MemBuffer::new(svd::svd_scratch::<f64>(
        m,
        n,
        ComputeSvdVectors::No,
        ComputeSvdVectors::No,
        par,
        Default::default(),
    ));
    svd::svd(
        fa.as_ref(),
        s.as_mut(),
        None,
        None,
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::Svd)?;
    Ok(s.column_vector().iter().copied().collect())
}

/// Thin SVD `A = U diag(s) V^T`.
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub v: Mat<f64>,
}

pub fn thin_svd(a: &Array2<f64>) -> Result<ThinSvd> {
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let fa = to_faer(a);
    let (m, n) = (a.nrows(), a.ncols());
    let k = m.min(n);
    let mut s = faer::diag::Diag::<f64>::zeros(k);
    let mut u = Mat::<f64>::zeros(m, k);
    let mut v = Mat::<f64>::zeros(n, k);
    let par = Par::Seq;
    let mut buf = MemBuffer::new(svd::svd_scratch::<f64>(
        m,
        n,
        ComputeSvdVectors::Thin,
        ComputeSvdVectors::Thin,
        par,
        Default::default(),
    ));
    svd::svd(
        fa.as_ref(),
        s.as_mut(),
        Some(u.as_mut()),
        Some(v.as_mut()),
        par,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|_| Error::Svd)?;
    Ok(ThinSvd {
        u,
        s: s.column_vector().iter().copied().collect(),
        v,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major `k x k`)
/// by Cholesky factorization. `A` is overwritten by its factor and `b` by the
/// solution. Returns `false` if a pivot is not safely positive.
pub fn cholesky_solve(a: &mut [f64], k: usize, b: &mut [f64]) -> bool {
    debug_assert_eq!(a.len(), k * k);
    debug_assert_eq!(b.len(), k);
    let scale = (0..k).map(|i| a[i * k + i]).fold(0.0, f64::max);
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 1e-13 * scale) {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut v = a[i * k + j];
            for p in 0..j {
                v -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = v / d;
        }
    }
    for i in 0..k {
        let mut v = b[i];
        for p in 0..i {
            v -= a[i * k + p] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut v = b[i];
        for p in i + 1..k {
            v -= a[p * k + i] * b[p];
        }
        b[i] = v / a[i * k + i];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn products() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(matvec(&a, &[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(matvec_t(&a, &[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        assert_eq!(column_norms(&array![[3.0], [4.0]]), vec![5.0]);
        let c = columns_contiguous(&a);
        assert_eq!(c.row(1).to_vec(), vec![2.0, 5.0]);
    }

    #[test]
    fn cholesky_small_system() {
        let mut a = vec![4.0, 2.0, 2.0, 3.0];
        let mut b = vec![2.0, 1.0];
        assert!(cholesky_solve(&mut a, 2, &mut b));
        assert!((b[0] - 0.5).abs() < 1e-15 && b[1].abs() < 1e-15);
        let mut singular = vec![1.0, 1.0, 1.0, 1.0];
        assert!(!cholesky_solve(&mut singular, 2, &mut [1.0, 1.0]));
    }

    #[test]
    fn svd_of_diagonal() {
        let a = array![[3.0, 0.0], [0.0, -4.0], [0.0, 0.0]];
        let s = singular_values(&a).unwrap();
        assert!((s[0] - 4.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12);
        let t = thin_svd(&a).unwrap();
        assert_eq!(t.u.nrows(), 3);
        assert_eq!(t.v.nrows(), 2);
    }
}
