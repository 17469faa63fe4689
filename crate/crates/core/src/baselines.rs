//! LASSO and least-squares baselines.
//!
//! The LASSO objective is `1/2 ||y - X theta||^2 + sum_l lambda_g(l) |theta_l|`
//! with one penalty per column group, minimized by cyclic coordinate descent.
//! Columns need not have unit norm, so the same routine serves cross-validation
//! folds whose row subsets break the normalization.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amp::SolverResult;
use crate::design::{ExpandedDesign, GroupKind};
use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{cholesky_solve, columns_contiguous, dot, matvec, matvec_t, norm_sq, thin_svd};
use crate::rng::{derive_seed, rng_from_seed, stream};

/// `sign(x) max(|x| - lambda, 0)`.
pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    /// Penalties for the DC, linear, quadratic and cross groups.
    pub lambdas: [f64; 4],
    /// Maximum number of coordinate passes.
    pub max_iters: usize,
    /// Pass budget of each fit inside cross-validation. Fits at the smallest
    /// penalties approach interpolation, where coordinate descent crawls; they
    /// only score a grid point, so a partial fit is enough.
    pub cv_max_iters: usize,
    /// Converged when the largest coordinate change of a full pass is below this.
    pub tol: f64,
    /// Use `lambdas[0]` for every group.
    pub equalize: bool,
    /// Leave the DC coefficient unpenalized.
    pub exempt_dc: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambdas: [0.0; 4],
            max_iters: 20_000,
            cv_max_iters: 1_000,
            tol: 1e-10,
            equalize: true,
            exempt_dc: false,
        }
    }
}

impl LassoConfig {
    pub fn equal(lambda: f64) -> Self {
        Self {
            lambdas: [lambda; 4],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "penalties must be finite and nonnegative, got {:?}",
                self.lambdas
            )));
        }
        if self.max_iters == 0 || self.cv_max_iters == 0 {
            return Err(Error::InvalidArgument("pass budgets must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }

    /// Effective penalty of each group after `equalize` and `exempt_dc`.
    pub fn group_lambdas(&self) -> [f64; 4] {
        let mut out = if self.equalize {
            [self.lambdas[0]; 4]
        } else {
            self.lambdas
        };
        if self.exempt_dc {
            out[GroupKind::Dc.index()] = 0.0;
        }
        out
    }

    pub fn column_lambdas(&self, design: &ExpandedDesign) -> Vec<f64> {
        let g = self.group_lambdas();
        design.groups().iter().map(|c| g[c.kind().index()]).collect()
    }
}

/// `1/2 ||y - X theta||^2 + sum lambda_l |theta_l|`.
pub fn lasso_objective(data: &Array2<f64>, y: &[f64], theta: &[f64], lambdas: &[f64]) -> f64 {
    let fit = matvec(data, theta);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b) * (a - b)).sum();
    let pen: f64 = theta.iter().zip(lambdas).map(|(t, l)| l * t.abs()).sum();
    0.5 * rss + pen
}

/// Largest violation of the LASSO optimality conditions.
///
/// Active coordinates need `X_l^T r = lambda_l sign(theta_l)`, inactive ones
/// `|X_l^T r| <= lambda_l`.
pub fn kkt_violation(data: &Array2<f64>, y: &[f64], theta: &[f64], lambdas: &[f64]) -> f64 {
    let fit = matvec(data, theta);
    let r: Vec<f64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let g = matvec_t(data, &r);
    g.iter()
        .zip(theta)
        .zip(lambdas)
        .map(|((&gl, &t), &l)| {
            if t != 0.0 {
                (gl - l * t.signum()).abs()
            } else {
                (gl.abs() - l).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

struct CdProblem<'a> {
    /// Row `l` holds column `l` of the design.
    columns: &'a Array2<f64>,
    col_sq: &'a [f64],
    lambdas: &'a [f64],
}

impl CdProblem<'_> {
    /// One pass over `coords`; returns the largest absolute coordinate change.
    fn pass(&self, theta: &mut [f64], r: &mut [f64], coords: impl Iterator<Item = usize>) -> f64 {
        let mut max_change: f64 = 0.0;
        for l in coords {
            let sq = self.col_sq[l];
            if sq == 0.0 {
                continue;
            }
            let col = self.columns.row(l);
            let col = col.as_slice().expect("standard layout");
            let old = theta[l];
            let rho = dot(col, r) + sq * old;
            let new = soft_threshold(rho, self.lambdas[l]) / sq;
            let delta = new - old;
            if delta != 0.0 {
                for (ri, &c) in r.iter_mut().zip(col) {
                    *ri -= c * delta;
                }
                theta[l] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        max_change
    }
}

struct CdOutcome {
    theta: Vec<f64>,
    passes: usize,
    converged: bool,
    objective: Vec<f64>,
}

fn objective_from_residual(r: &[f64], theta: &[f64], lambdas: &[f64]) -> f64 {
    let pen: f64 = theta.iter().zip(lambdas).map(|(t, l)| l * t.abs()).sum();
    0.5 * norm_sq(r) + pen
}

/// Exact minimizer on the current support and sign pattern.
///
/// Solves `X_A^T X_A theta_A = X_A^T y - lambda_A sign(theta_A)` and accepts
/// the result only if it keeps every sign and does not raise the objective,
/// in which case it is the minimizer over that orthant face. Near-singular
/// supports, where coordinate passes crawl, are exactly where this pays off.
fn polish(problem: &CdProblem<'_>, y: &[f64], active: &[usize], theta: &mut [f64], r: &mut [f64]) -> bool {
    let k = active.len();
    if k == 0 || k > y.len() {
        return false;
    }
    let cols: Vec<&[f64]> = active
        .iter()
        .map(|&j| problem.columns.row(j).to_slice().expect("standard layout"))
        .collect();
    let mut gram = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..=a {
            let g = dot(cols[a], cols[b]);
            gram[a * k + b] = g;
            gram[b * k + a] = g;
        }
    }
    let mut sol: Vec<f64> = active
        .iter()
        .zip(&cols)
        .map(|(&j, c)| dot(c, y) - problem.lambdas[j] * theta[j].signum())
        .collect();
    if !cholesky_solve(&mut gram, k, &mut sol) {
        return false;
    }
    if active
        .iter()
        .zip(&sol)
        .any(|(&j, &v)| !v.is_finite() || v == 0.0 || v.signum() != theta[j].signum())
    {
        return false;
    }
    let mut r_new = y.to_vec();
    for (c, &v) in cols.iter().zip(&sol) {
        for (ri, &x) in r_new.iter_mut().zip(c.iter()) {
            *ri -= x * v;
        }
    }
    let mut theta_new = theta.to_vec();
    for (&j, &v) in active.iter().zip(&sol) {
        theta_new[j] = v;
    }
    let before = objective_from_residual(r, theta, problem.lambdas);
    let after = objective_from_residual(&r_new, &theta_new, problem.lambdas);
    if !(after <= before) {
        return false;
    }
    theta.copy_from_slice(&theta_new);
    r.copy_from_slice(&r_new);
    true
}

/// Active-set coordinate descent: full passes alternate with an exact solve
/// on the current support (when it keeps its signs) or with passes over the
/// current nonzeros, until a full pass moves nothing by more than `tol`.
fn coordinate_descent(
    problem: &CdProblem<'_>,
    y: &[f64],
    warm: Option<&[f64]>,
    max_passes: usize,
    tol: f64,
    record_objective: bool,
) -> CdOutcome {
    let l = problem.col_sq.len();
    let mut theta = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; l]);
    let mut r = y.to_vec();
    for (j, &t) in theta.iter().enumerate() {
        if t != 0.0 {
            let col = problem.columns.row(j);
            for (ri, &c) in r.iter_mut().zip(col.iter()) {
                *ri -= c * t;
            }
        }
    }
    let mut objective = Vec::new();
    let mut passes = 0;
    let mut converged = false;
    while passes < max_passes {
        let change = problem.pass(&mut theta, &mut r, 0..l);
        passes += 1;
        if record_objective {
            objective.push(objective_from_residual(&r, &theta, problem.lambdas));
        }
        if change < tol {
            converged = true;
            break;
        }
        let active: Vec<usize> = (0..l).filter(|&j| theta[j] != 0.0).collect();
        if polish(problem, y, &active, &mut theta, &mut r) {
            passes += 1;
            if record_objective {
                objective.push(objective_from_residual(&r, &theta, problem.lambdas));
            }
            continue;
        }
        while passes < max_passes {
            let change = problem.pass(&mut theta, &mut r, active.iter().copied());
            passes += 1;
            if record_objective {
                objective.push(objective_from_residual(&r, &theta, problem.lambdas));
            }
            if change < tol {
                break;
            }
        }
    }
    CdOutcome {
        theta,
        passes,
        converged,
        objective,
    }
}

fn check_inputs(design: &ExpandedDesign, y: &[f64]) -> Result<()> {
    if y.len() != design.m() {
        return Err(Error::DimensionMismatch {
            what: "measurement vector",
            expected: design.m(),
            actual: y.len(),
        });
    }
    ensure_finite(y, "measurements")?;
    if !design.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("design"));
    }
    Ok(())
}

fn squared_column_norms(columns: &Array2<f64>) -> Vec<f64> {
    columns
        .rows()
        .into_iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect()
}

/// Cyclic coordinate descent for the group-penalized LASSO.
///
/// `objective_trace` holds the objective after every pass (full or active-set)
/// and `iterations_used` counts passes.
pub fn lasso_cd(design: &ExpandedDesign, y: &[f64], config: &LassoConfig) -> Result<SolverResult> {
    lasso_cd_warm(design, y, config, None)
}

/// [`lasso_cd`] started from `warm` instead of zero.
pub fn lasso_cd_warm(
    design: &ExpandedDesign,
    y: &[f64],
    config: &LassoConfig,
    warm: Option<&[f64]>,
) -> Result<SolverResult> {
    let start = Instant::now();
    config.validate()?;
    check_inputs(design, y)?;
    if let Some(w) = warm {
        if w.len() != design.l() {
            return Err(Error::DimensionMismatch {
                what: "warm start",
                expected: design.l(),
                actual: w.len(),
            });
        }
    }
    let columns = columns_contiguous(design.data());
    let col_sq = squared_column_norms(&columns);
    let lambdas = config.column_lambdas(design);
    let problem = CdProblem {
        columns: &columns,
        col_sq: &col_sq,
        lambdas: &lambdas,
    };
    let out = coordinate_descent(&problem, y, warm, config.max_iters, config.tol, true);
    let mut result = SolverResult::from_normalized(design, out.theta, out.passes, out.converged)?;
    result.objective_trace = out.objective;
    result.elapsed = start.elapsed();
    Ok(result)
}

/// `max_l |X_l^T y|`, the smallest equal penalty that zeroes every coefficient.
pub fn lambda_max(design: &ExpandedDesign, y: &[f64]) -> f64 {
    matvec_t(design.data(), y)
        .into_iter()
        .fold(0.0, |a, v| a.max(v.abs()))
}

/// `points` log-spaced penalties over `[1e-4, 1] * lambda_max`, ascending.
pub fn default_lambda_grid(design: &ExpandedDesign, y: &[f64], points: usize) -> Vec<f64> {
    let top = lambda_max(design, y);
    if points == 1 {
        return vec![top];
    }
    (0..points)
        .map(|i| {
            let e = -4.0 + 4.0 * i as f64 / (points - 1) as f64;
            top * 10f64.powf(e)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_val_mse: f64,
    pub std_val_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    /// One point per grid value, in grid order.
    pub curve: Vec<CvPoint>,
}

impl CvResult {
    /// CSV with columns `lambda,mean_val_mse,std_val_mse`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "mean_val_mse", "std_val_mse"])?;
        for p in &self.curve {
            w.write_record([
                p.lambda.to_string(),
                p.mean_val_mse.to_string(),
                p.std_val_mse.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fold label of every row: a seeded permutation dealt round-robin.
pub fn fold_assignment(m: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, stream::FOLDS)));
    let mut label = vec![0; m];
    for (pos, &row) in order.iter().enumerate() {
        label[row] = pos % folds;
    }
    label
}

/// K-fold cross-validation of an equal penalty.
///
/// Each fold fits the whole grid from the largest penalty down with warm
/// starts. Folds run in parallel; the curve is assembled in fold order.
/// Ties in mean validation error go to the earlier grid entry.
pub fn cross_validate_lambda(
    design: &ExpandedDesign,
    y: &[f64],
    grid: &[f64],
    folds: usize,
    config: &LassoConfig,
    seed: u64,
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if design.m() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} rows cannot be split into {folds} folds",
            design.m()
        )));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("lambda grid must be finite and nonnegative".into()));
    }
    config.validate()?;
    check_inputs(design, y)?;
    if grid.len() == 1 {
        return Ok(CvResult {
            lambda: grid[0],
            curve: vec![CvPoint {
                lambda: grid[0],
                mean_val_mse: f64::NAN,
                std_val_mse: f64::NAN,
            }],
        });
    }

    let labels = fold_assignment(design.m(), folds, seed);
    let mut path: Vec<usize> = (0..grid.len()).collect();
    path.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));

    let per_fold: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|k| {
            let train: Vec<usize> = (0..design.m()).filter(|&i| labels[i] != k).collect();
            let val: Vec<usize> = (0..design.m()).filter(|&i| labels[i] == k).collect();
            let x_tr = design.select_rows(&train);
            let x_va = design.select_rows(&val);
            let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_va: Vec<f64> = val.iter().map(|&i| y[i]).collect();
            let columns = columns_contiguous(x_tr.data());
            let col_sq = squared_column_norms(&columns);
            let mut mse = vec![0.0; grid.len()];
            let mut warm: Option<Vec<f64>> = None;
            for &g in &path {
                let cfg = LassoConfig {
                    lambdas: [grid[g]; 4],
                    equalize: true,
                    ..*config
                };
                let lambdas = cfg.column_lambdas(&x_tr);
                let problem = CdProblem {
                    columns: &columns,
                    col_sq: &col_sq,
                    lambdas: &lambdas,
                };
                let out = coordinate_descent(
                    &problem,
                    &y_tr,
                    warm.as_deref(),
                    config.cv_max_iters,
                    config.tol,
                    false,
                );
                let fit = matvec(x_va.data(), &out.theta);
                mse[g] = y_va
                    .iter()
                    .zip(&fit)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / y_va.len() as f64;
                warm = Some(out.theta);
            }
            mse
        })
        .collect();

    let curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let vals: Vec<f64> = per_fold.iter().map(|f| f[g]).collect();
            let mean = vals.iter().sum::<f64>() / folds as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / folds as f64;
            CvPoint {
                lambda,
                mean_val_mse: mean,
                std_val_mse: var.sqrt(),
            }
        })
        .collect();
    let best = curve
        .iter()
        .enumerate()
        .fold(0, |best, (i, p)| if p.mean_val_mse < curve[best].mean_val_mse { i } else { best });
    Ok(CvResult {
        lambda: curve[best].lambda,
        curve,
    })
}

/// Cross-validates an equal penalty on the default grid, then refits on all rows.
pub fn lasso_cv_fit(
    design: &ExpandedDesign,
    y: &[f64],
    folds: usize,
    grid_points: usize,
    config: &LassoConfig,
    seed: u64,
) -> Result<(SolverResult, CvResult)> {
    let grid = default_lambda_grid(design, y, grid_points);
    let cv = cross_validate_lambda(design, y, &grid, folds, config, seed)?;
    let cfg = LassoConfig {
        lambdas: [cv.lambda; 4],
        equalize: true,
        ..*config
    };
    let fit = lasso_cd(design, y, &cfg)?;
    Ok((fit, cv))
}

/// Singular values below this fraction of the largest are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Minimum-norm least squares `V diag(1/s) U^T y` over the retained
/// singular triplets.
pub fn pseudoinverse_solve(design: &ExpandedDesign, y: &[f64]) -> Result<SolverResult> {
    let start = Instant::now();
    check_inputs(design, y)?;
    let svd = thin_svd(design.data())?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = PINV_RCOND * smax;
    let (m, l) = (design.m(), design.l());
    let mut theta = vec![0.0; l];
    for (k, &s) in svd.s.iter().enumerate() {
        if !(s > cutoff) {
            continue;
        }
        let mut uty = 0.0;
        for i in 0..m {
            uty += svd.u[(i, k)] * y[i];
        }
        let w = uty / s;
        for (j, t) in theta.iter_mut().enumerate() {
            *t += svd.v[(j, k)] * w;
        }
    }
    let mut result = SolverResult::from_normalized(design, theta, 1, true)?;
    result.elapsed = start.elapsed();
    Ok(result)
}
