#![allow(dead_code)]

pub mod quadrature;

use ndarray::Array2;
use quadamp::design::column_count;
use quadamp::rng::{rng_from_seed, standard_normal};
use quadamp::{ExpandedDesign, Scale};

/// An i.i.d. Gaussian `m x column_count(n)` matrix with unit columns, wrapped
/// as a normalized design. Unlike a kernel expansion it has no outlying
/// singular value.
pub fn iid_normalized(m: usize, n: usize, seed: u64) -> ExpandedDesign {
    let l = column_count(n).unwrap();
    let mut rng = rng_from_seed(seed);
    let mut a = Array2::from_shape_fn((m, l), |_| standard_normal(&mut rng));
    let mut norms = Vec::with_capacity(l);
    for mut col in a.columns_mut() {
        let s = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.mapv_inplace(|v| v / s);
        norms.push(s);
    }
    ExpandedDesign::from_parts(a, n, norms, Scale::Normalized).unwrap()
}

pub fn gaussian_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| standard_normal(&mut rng)).collect()
}

pub fn matvec(a: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[[i, j]] * x[j]).sum())
        .collect()
}

pub fn matvec_t(a: &Array2<f64>, r: &[f64]) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[[i, j]] * r[i]).sum())
        .collect()
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs()))
            .unwrap();
        if piv != k {
            for j in 0..n {
                a.swap([k, j], [piv, j]);
            }
            b.swap(k, piv);
        }
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for j in k..n {
                a[[i, j]] -= f * a[[k, j]];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[[k, j]] * x[j]).sum();
        x[k] = (b[k] - s) / a[[k, k]];
    }
    x
}

/// Least squares through the normal equations.
pub fn least_squares(a: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let gram = a.t().dot(a);
    solve_dense(gram, matvec_t(a, y))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
