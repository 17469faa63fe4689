//! Approximate message passing on a column-normalized design.
//!
//! Each iteration forms the pseudo-data `q = X^T r + theta`, denoises it
//! entrywise, and rebuilds the residual with the Onsager term
//! `(L / M) r <eta'>`. The effective channel variance is tracked as the
//! residual energy per measurement.
//!
//! Two update orders are available. [`Variant::Simultaneous`] is the
//! textbook iteration with optional damping of both `theta` and `r`.
//! [`Variant::Sweep`] keeps the same fixed-point equations but updates the
//! coefficients one at a time in a random order, patching the residual after
//! every coordinate. On kernel-expanded designs the top singular value is far
//! above the bulk (roughly `1 + N/3`), and the simultaneous iteration is only
//! stable for damping below about `2 / sigma_1^2`; the sweep order does not
//! have this restriction, which is why it is the default.

use std::io::Write;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::denoise::ColumnPriors;
use crate::design::{predict, rescale_coefficients_to_original, ExpandedDesign, GroupedCoefficients, Scale};
use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{columns_contiguous, dot, matvec, matvec_t, norm, norm_sq};
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const SIGMA2_FLOOR: f64 = 1e-12;
const CHANGE_EPS: f64 = 1e-12;
/// Residual growth (relative to the initial channel variance) treated as divergence.
const BLOWUP_FACTOR: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Simultaneous,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmpConfig {
    pub max_iters: usize,
    /// Weight of the new iterate; 1 means undamped.
    pub damping: f64,
    /// Relative change in `theta` below which the run stops.
    pub tol: f64,
    pub variant: Variant,
    /// Seed of the sweep-order stream.
    pub seed: u64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            damping: 0.7,
            tol: 1e-8,
            variant: Variant::Sweep,
            seed: 0,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        Ok(())
    }
}

/// One row of a solver trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub residual_norm: f64,
    pub sigma2_eff: f64,
    pub coeff_mse: Option<f64>,
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub theta: Vec<f64>,
    pub residual: Vec<f64>,
    pub sigma2_eff: f64,
    pub iteration: usize,
    /// Denoiser derivatives from the latest update (feeds the Onsager term).
    pub derivatives: Vec<f64>,
    pub mse_trace: Vec<TraceEntry>,
    initial_sigma2: f64,
}

impl AmpState {
    /// Pseudo-data `X^T r + theta` for the current iterate.
    pub fn pseudo_data(&self, design: &ExpandedDesign) -> Vec<f64> {
        let mut q = matvec_t(design.data(), &self.residual);
        for (qi, ti) in q.iter_mut().zip(&self.theta) {
            *qi += ti;
        }
        q
    }

    fn push_trace(&mut self) {
        self.mse_trace.push(TraceEntry {
            iteration: self.iteration,
            residual_norm: norm(&self.residual),
            sigma2_eff: self.sigma2_eff,
            coeff_mse: None,
            test_mse: None,
        });
    }
}

/// Final estimate and diagnostics of any solver in this crate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverResult {
    pub theta_hat_normalized: Vec<f64>,
    pub theta_hat_original: GroupedCoefficients,
    pub iterations_used: usize,
    pub converged: bool,
    #[serde(default)]
    pub diverged: bool,
    pub trace: Vec<TraceEntry>,
    /// Objective value per pass, for solvers that minimize one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    #[serde(skip)]
    pub elapsed: Duration,
    #[serde(skip)]
    pub final_state: Option<AmpState>,
}

impl SolverResult {
    pub(crate) fn from_normalized(
        design: &ExpandedDesign,
        theta: Vec<f64>,
        iterations_used: usize,
        converged: bool,
    ) -> Result<Self> {
        let grouped = GroupedCoefficients::from_flat(design.n(), &theta, design.scale())?;
        let original = match design.scale() {
            Scale::Normalized => rescale_coefficients_to_original(&grouped, design.norms())?,
            Scale::Original => grouped,
        };
        Ok(Self {
            theta_hat_normalized: theta,
            theta_hat_original: original,
            iterations_used,
            converged,
            diverged: false,
            trace: Vec::new(),
            objective_trace: Vec::new(),
            elapsed: Duration::ZERO,
            final_state: None,
        })
    }
}

/// Optional ground truth and held-out data used to annotate traces.
#[derive(Debug, Clone, Copy, Default)]
pub struct Monitor<'a> {
    /// True coefficients in the original scale.
    pub truth: Option<&'a GroupedCoefficients>,
    /// Raw (unnormalized) held-out design and targets.
    pub test: Option<(&'a ExpandedDesign, &'a [f64])>,
}

impl Monitor<'_> {
    pub fn annotate(&self, entry: &mut TraceEntry, design: &ExpandedDesign, theta_normalized: &[f64]) {
        if self.truth.is_none() && self.test.is_none() {
            return;
        }
        let Ok(grouped) = GroupedCoefficients::from_flat(design.n(), theta_normalized, design.scale()) else {
            return;
        };
        let original = match design.scale() {
            Scale::Normalized => match rescale_coefficients_to_original(&grouped, design.norms()) {
                Ok(o) => o,
                Err(_) => return,
            },
            Scale::Original => grouped,
        };
        if let Some(truth) = self.truth {
            let est = original.to_flat();
            let tru = truth.to_flat();
            if est.len() == tru.len() {
                let se: f64 = est.iter().zip(&tru).map(|(a, b)| (a - b) * (a - b)).sum();
                entry.coeff_mse = Some(se / est.len() as f64);
            }
        }
        if let Some((x_test, y_test)) = self.test {
            if let Ok(mse) = crate::synthetic::test_mse(x_test, &original, y_test) {
                entry.test_mse = Some(mse);
            }
        }
    }
}

/// `||r||^2 / m`, floored at `1e-12`.
pub fn estimate_effective_noise(residual: &[f64], m: usize) -> f64 {
    debug_assert!(m >= 1);
    (norm_sq(residual) / m.max(1) as f64).max(SIGMA2_FLOOR)
}

fn check_problem(design: &ExpandedDesign, y: &[f64]) -> Result<()> {
    if !design.is_normalized() {
        return Err(Error::InvalidArgument("AMP requires a column-normalized design".into()));
    }
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

/// `theta = 0`, `r = y`, `sigma2 = ||y||^2 / M`.
pub fn amp_init(design: &ExpandedDesign, y: &[f64]) -> Result<AmpState> {
    check_problem(design, y)?;
    let sigma2 = estimate_effective_noise(y, design.m());
    let mut state = AmpState {
        theta: vec![0.0; design.l()],
        residual: y.to_vec(),
        sigma2_eff: sigma2,
        iteration: 0,
        derivatives: vec![0.0; design.l()],
        mse_trace: Vec::new(),
        initial_sigma2: sigma2,
    };
    state.push_trace();
    Ok(state)
}

fn check_state(state: &AmpState, design: &ExpandedDesign, priors: &ColumnPriors) -> Result<()> {
    if state.theta.len() != design.l() || state.derivatives.len() != design.l() {
        return Err(Error::DimensionMismatch {
            what: "state coefficient vector",
            expected: design.l(),
            actual: state.theta.len(),
        });
    }
    if state.residual.len() != design.m() {
        return Err(Error::DimensionMismatch {
            what: "state residual",
            expected: design.m(),
            actual: state.residual.len(),
        });
    }
    if priors.len() != design.l() {
        return Err(Error::DimensionMismatch {
            what: "column priors",
            expected: design.l(),
            actual: priors.len(),
        });
    }
    Ok(())
}

/// Hook invoked with the pseudo-data and channel variance before denoising.
pub(crate) type PriorUpdate<'h> = dyn FnMut(&[f64], f64, &mut ColumnPriors) -> Result<()> + 'h;

fn commit(
    state: &mut AmpState,
    theta: Vec<f64>,
    residual: Vec<f64>,
    derivatives: Vec<f64>,
    m: usize,
) -> Result<()> {
    let iteration = state.iteration + 1;
    let sigma2 = estimate_effective_noise(&residual, m);
    let finite = theta.iter().chain(&residual).all(|v| v.is_finite()) && sigma2.is_finite();
    if !finite || sigma2 > BLOWUP_FACTOR * state.initial_sigma2.max(1.0) {
        return Err(Error::Diverged { iteration });
    }
    state.theta = theta;
    state.residual = residual;
    state.derivatives = derivatives;
    state.sigma2_eff = sigma2;
    state.iteration = iteration;
    state.push_trace();
    Ok(())
}

fn simultaneous_step(
    state: &mut AmpState,
    design: &ExpandedDesign,
    y: &[f64],
    priors: &mut ColumnPriors,
    damping: f64,
    hook: Option<&mut PriorUpdate<'_>>,
) -> Result<()> {
    let (m, l) = (design.m(), design.l());
    let x = design.data();
    let mut q = matvec_t(x, &state.residual);
    for (qi, ti) in q.iter_mut().zip(&state.theta) {
        *qi += ti;
    }
    if let Some(hook) = hook {
        hook(&q, state.sigma2_eff, priors)?;
    }
    let mut fresh = vec![0.0; l];
    let mut derivs = vec![0.0; l];
    let mean_deriv = priors.denoise(&q, state.sigma2_eff, &mut fresh, &mut derivs);
    let onsager = (l as f64 / m as f64) * mean_deriv;
    let fitted = matvec(x, &fresh);
    let mut residual: Vec<f64> = y
        .iter()
        .zip(&fitted)
        .zip(&state.residual)
        .map(|((yi, fi), ri)| yi - fi + onsager * ri)
        .collect();
    let theta = if damping < 1.0 {
        for (rn, ro) in residual.iter_mut().zip(&state.residual) {
            *rn = damping * *rn + (1.0 - damping) * ro;
        }
        fresh
            .iter()
            .zip(&state.theta)
            .map(|(tn, to)| damping * tn + (1.0 - damping) * to)
            .collect()
    } else {
        fresh
    };
    commit(state, theta, residual, derivs, m)
}

fn sweep_order(seed: u64, iteration: usize, l: usize) -> Vec<usize> {
    let mut rng = rng_from_seed(derive_seed(derive_seed(seed, stream::SWEEP), iteration as u64));
    let mut order: Vec<usize> = (0..l).collect();
    order.shuffle(&mut rng);
    order
}

fn sweep_step(
    state: &mut AmpState,
    design: &ExpandedDesign,
    columns: &Array2<f64>,
    y: &[f64],
    priors: &mut ColumnPriors,
    config: &AmpConfig,
    hook: Option<&mut PriorUpdate<'_>>,
) -> Result<()> {
    let (m, l) = (design.m(), design.l());
    let mf = m as f64;
    let x = design.data();

    // Re-synchronize the Onsager-corrected residual with the current iterate.
    let fitted = matvec(x, &state.theta);
    let dsum: f64 = state.derivatives.iter().sum();
    let mut r: Vec<f64> = y
        .iter()
        .zip(&fitted)
        .zip(&state.residual)
        .map(|((yi, fi), ri)| yi - fi + (dsum / mf) * ri)
        .collect();
    let sigma2 = estimate_effective_noise(&r, m);

    if let Some(hook) = hook {
        let mut q = matvec_t(x, &r);
        for (qi, ti) in q.iter_mut().zip(&state.theta) {
            *qi += ti;
        }
        hook(&q, sigma2, priors)?;
    }

    let mut theta = state.theta.clone();
    let mut derivs = state.derivatives.clone();
    for i in sweep_order(config.seed, state.iteration, l) {
        let col = columns.row(i);
        let col = col.as_slice().expect("contiguous column");
        let q = dot(col, &r) + theta[i];
        let (est, der) = priors.get(i).denoise(q, sigma2);
        let delta = config.damping * (est - theta[i]);
        let scale = 1.0 + (der - derivs[i]) / mf;
        for (rk, ck) in r.iter_mut().zip(col) {
            *rk = *rk * scale - ck * delta;
        }
        theta[i] += delta;
        derivs[i] = der;
    }
    commit(state, theta, r, derivs, m)
}

/// One simultaneous AMP iteration.
pub fn amp_step(
    state: &AmpState,
    design: &ExpandedDesign,
    y: &[f64],
    priors: &ColumnPriors,
    config: &AmpConfig,
) -> Result<AmpState> {
    config.validate()?;
    check_problem(design, y)?;
    check_state(state, design, priors)?;
    let mut next = state.clone();
    let mut priors = priors.clone();
    simultaneous_step(&mut next, design, y, &mut priors, config.damping, None)?;
    Ok(next)
}

/// One sweep-order AMP iteration.
pub fn amp_sweep_step(
    state: &AmpState,
    design: &ExpandedDesign,
    y: &[f64],
    priors: &ColumnPriors,
    config: &AmpConfig,
) -> Result<AmpState> {
    config.validate()?;
    check_problem(design, y)?;
    check_state(state, design, priors)?;
    let columns = columns_contiguous(design.data());
    let mut next = state.clone();
    let mut priors = priors.clone();
    sweep_step(&mut next, design, &columns, y, &mut priors, config, None)?;
    Ok(next)
}

/// Runs AMP to convergence or `max_iters`.
pub fn amp_run(
    design: &ExpandedDesign,
    y: &[f64],
    priors: &ColumnPriors,
    config: &AmpConfig,
) -> Result<SolverResult> {
    amp_run_monitored(design, y, priors, config, Monitor::default())
}

pub fn amp_run_monitored(
    design: &ExpandedDesign,
    y: &[f64],
    priors: &ColumnPriors,
    config: &AmpConfig,
    monitor: Monitor<'_>,
) -> Result<SolverResult> {
    run_loop(design, y, priors.clone(), config, monitor, None)
}

pub(crate) fn run_loop(
    design: &ExpandedDesign,
    y: &[f64],
    mut priors: ColumnPriors,
    config: &AmpConfig,
    monitor: Monitor<'_>,
    mut hook: Option<&mut PriorUpdate<'_>>,
) -> Result<SolverResult> {
    let start = Instant::now();
    config.validate()?;
    let mut state = amp_init(design, y)?;
    check_state(&state, design, &priors)?;
    if let Some(entry) = state.mse_trace.last_mut() {
        monitor.annotate(entry, design, &state.theta);
    }
    let columns = match config.variant {
        Variant::Sweep => Some(columns_contiguous(design.data())),
        Variant::Simultaneous => None,
    };

    let mut converged = false;
    let mut diverged = false;
    for _ in 0..config.max_iters {
        let previous = state.theta.clone();
        let hook_ref = hook.as_mut().map(|h| &mut **h as &mut PriorUpdate<'_>);
        let outcome = match &columns {
            Some(cols) => sweep_step(&mut state, design, cols, y, &mut priors, config, hook_ref),
            None => simultaneous_step(&mut state, design, y, &mut priors, config.damping, hook_ref),
        };
        match outcome {
            Ok(()) => {}
            Err(Error::Diverged { .. }) if config.damping < 1.0 => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(entry) = state.mse_trace.last_mut() {
            monitor.annotate(entry, design, &state.theta);
        }
        let diff: f64 = state
            .theta
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if diff / norm(&previous).max(CHANGE_EPS) < config.tol {
            converged = true;
            break;
        }
    }

    let mut result =
        SolverResult::from_normalized(design, state.theta.clone(), state.iteration, converged)?;
    result.diverged = diverged;
    result.trace = state.mse_trace.clone();
    result.elapsed = start.elapsed();
    result.final_state = Some(state);
    Ok(result)
}

/// Writes a trace as CSV with columns
/// `iteration,residual_norm,sigma2_eff,coeff_mse,test_mse`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "residual_norm", "sigma2_eff", "coeff_mse", "test_mse"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in trace {
        w.write_record([
            e.iteration.to_string(),
            e.residual_norm.to_string(),
            e.sigma2_eff.to_string(),
            opt(e.coeff_mse),
            opt(e.test_mse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Test-set predictions for a solver result, computed from the original-scale
/// coefficients.
pub fn predict_original(x_test: &ExpandedDesign, result: &SolverResult) -> Result<Vec<f64>> {
    Ok(predict(x_test, &result.theta_hat_original)?.to_vec())
}
