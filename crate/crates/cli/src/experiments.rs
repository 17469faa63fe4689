//! Experiment drivers.
//!
//! Trials run on the rayon pool and are collected in trial order, so reports
//! do not depend on the thread count. Wall-clock times are kept out of the
//! written reports to keep reruns byte-identical.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use quadamp::amp::write_trace_csv;
use quadamp::baselines::lasso_cv_fit;
use quadamp::design::{column_count, rescale_coefficients_to_normalized};
use quadamp::eb::eb_amp_run_monitored;
use quadamp::rng::derive_seed;
use quadamp::spectrum::write_spectrum_csv;
use quadamp::synthetic::{gen_bayes_dataset, gen_sinusoid_dataset, test_mse, Dataset};
use quadamp::{
    amp_run_monitored, pseudoinverse_solve, spectrum_table, BayesModelSpec, ColumnPriors, CvResult,
    EbDiagnostics, Monitor, SinusoidSpec, SolverResult, SpectrumReport,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{ExperimentKind, ExperimentSpec, SolverKind};

/// Seed of trial `t`; trials of every experiment kind derive from the master
/// seed the same way.
pub fn trial_seed(master: u64, t: usize) -> u64 {
    derive_seed(master, 0x7472_6961_6c00_0000 | t as u64)
}

/// Number of training rows for measurement rate `rate` with `n` features.
pub fn rows_for_rate(rate: f64, n: usize) -> Result<usize> {
    let l = column_count(n)?;
    let m = (rate * l as f64).round() as usize;
    if m == 0 {
        bail!("rate {rate} gives no training rows for n = {n}");
    }
    Ok(m)
}

/// Empirical check that the pseudo-data behaves as truth plus white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingCheck {
    /// `var(q - theta)` in the normalized scale.
    pub error_variance: f64,
    pub sigma2_eff: f64,
    pub excess_kurtosis: f64,
}

impl DecouplingCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.error_variance - self.sigma2_eff).abs() / self.sigma2_eff
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub solver: SolverKind,
    pub coeff_mse: Option<f64>,
    pub test_mse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoupling: Option<DecouplingCheck>,
    /// Largest EM log-likelihood decrease observed (empirical-Bayes runs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_em_decrease: Option<f64>,
}

/// Everything a solver produced in one trial, including the artifacts that
/// go to per-trial files.
struct SolverRun {
    outcome: SolverOutcome,
    result: Option<SolverResult>,
    cv: Option<CvResult>,
    eb: Option<EbDiagnostics>,
}

fn failed(solver: SolverKind, err: impl std::fmt::Display) -> SolverRun {
    SolverRun {
        outcome: SolverOutcome {
            solver,
            coeff_mse: None,
            test_mse: None,
            iterations: 0,
            converged: false,
            diverged: false,
            error: Some(err.to_string()),
            lambda: None,
            decoupling: None,
            worst_em_decrease: None,
        },
        result: None,
        cv: None,
        eb: None,
    }
}

fn sample_moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2, m4 / (m2 * m2) - 3.0)
}

fn decoupling(
    result: &SolverResult,
    data: &Dataset,
    train: &quadamp::ExpandedDesign,
) -> Option<DecouplingCheck> {
    let truth = data.truth.as_ref()?;
    let state = result.final_state.as_ref()?;
    let q = state.pseudo_data(train);
    let theta = rescale_coefficients_to_normalized(truth, train.norms()).ok()?.to_flat();
    let err: Vec<f64> = q.iter().zip(&theta).map(|(a, b)| a - b).collect();
    let (var, kurt) = sample_moments(&err);
    Some(DecouplingCheck {
        error_variance: var,
        sigma2_eff: state.sigma2_eff,
        excess_kurtosis: kurt,
    })
}

fn run_solver(solver: SolverKind, spec: &ExperimentSpec, data: &Dataset, seed: u64) -> SolverRun {
    match try_run_solver(solver, spec, data, seed) {
        Ok(run) => run,
        Err(e) => failed(solver, format!("{e:#}")),
    }
}

fn try_run_solver(solver: SolverKind, spec: &ExperimentSpec, data: &Dataset, seed: u64) -> Result<SolverRun> {
    let prep = data.prepare()?;
    let train = &prep.train;
    let y = &data.y_train;
    let monitor = Monitor {
        truth: data.truth.as_ref(),
        test: Some((&prep.test_raw, &data.y_test)),
    };
    let amp_cfg = quadamp::AmpConfig { seed, ..spec.amp };
    let mut cv = None;
    let mut eb = None;
    let result = match solver {
        SolverKind::Amp => {
            let priors = ColumnPriors::for_normalized_design(&spec.priors, train);
            amp_run_monitored(train, y, &priors, &amp_cfg, monitor)?
        }
        SolverKind::EbAmp => {
            let out = eb_amp_run_monitored(train, y, &amp_cfg, &spec.eb, monitor)?;
            eb = Some(out.diagnostics);
            out.result
        }
        SolverKind::Lasso => {
            let (fit, curve) = lasso_cv_fit(train, y, spec.cv.folds, spec.cv.grid_points, &spec.lasso, seed)?;
            cv = Some(curve);
            fit
        }
        SolverKind::Pseudoinverse => pseudoinverse_solve(train, y)?,
    };
    let test = test_mse(&prep.test_raw, &result.theta_hat_original, &data.y_test)?;
    let coeff_mse = data.truth.as_ref().map(|t| {
        let est = result.theta_hat_original.to_flat();
        let tru = t.to_flat();
        est.iter().zip(&tru).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / est.len() as f64
    });
    let decoupling = match solver {
        SolverKind::Amp | SolverKind::EbAmp => decoupling(&result, data, train),
        _ => None,
    };
    let outcome = SolverOutcome {
        solver,
        coeff_mse,
        test_mse: Some(test),
        iterations: result.iterations_used,
        converged: result.converged,
        diverged: result.diverged,
        error: None,
        lambda: cv.as_ref().map(|c| c.lambda),
        decoupling,
        worst_em_decrease: eb.as_ref().map(EbDiagnostics::worst_em_decrease),
    };
    Ok(SolverRun {
        outcome,
        result: Some(result),
        cv,
        eb,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Measurement rate, for the sinusoid experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    pub m: usize,
    pub outcomes: Vec<SolverOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub median_test_mse: f64,
    pub mean_test_mse: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_coeff_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_coeff_mse: Option<f64>,
    /// Trials that produced a test MSE.
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn summarize<'a>(outcomes: impl Iterator<Item = &'a SolverOutcome> + Clone) -> SolverSummary {
    let test: Vec<f64> = outcomes.clone().filter_map(|o| o.test_mse).collect();
    let coeff: Vec<f64> = outcomes.clone().filter_map(|o| o.coeff_mse).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    SolverSummary {
        median_test_mse: median(&test),
        mean_test_mse: mean(&test),
        median_coeff_mse: (!coeff.is_empty()).then(|| median(&coeff)),
        mean_coeff_mse: (!coeff.is_empty()).then(|| mean(&coeff)),
        completed: test.len(),
        diverged: outcomes.clone().filter(|o| o.diverged).count(),
        failed: outcomes.filter(|o| o.error.is_some()).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesReport {
    pub spec: ExperimentSpec,
    pub summary: BTreeMap<SolverKind, SolverSummary>,
    pub trials: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub rate: f64,
    pub m: usize,
    pub solvers: BTreeMap<SolverKind, SolverSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbReport {
    pub spec: ExperimentSpec,
    pub rates: Vec<RateSummary>,
    pub trials: Vec<TrialRecord>,
}

impl EbReport {
    /// Median test MSE of `solver` at rate index `i`.
    pub fn median(&self, i: usize, solver: SolverKind) -> Option<f64> {
        self.rates.get(i)?.solvers.get(&solver).map(|s| s.median_test_mse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<SpectrumReport>,
}

fn check_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        bail!("expected a {kind:?} spec, got {:?}", spec.kind);
    }
    spec.validate()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes the per-solver artifacts of one trial under `dir` with file stem
/// `stem`.
fn write_trial_artifacts(dir: &Path, stem: &str, runs: &[SolverRun]) -> Result<()> {
    for run in runs {
        let name = run.outcome.solver.name();
        if let Some(result) = &run.result {
            let f = File::create(dir.join(format!("trace_{stem}_{name}.csv")))?;
            write_trace_csv(&result.trace, BufWriter::new(f))?;
        }
        if let Some(cv) = &run.cv {
            let f = File::create(dir.join(format!("cv_{stem}.csv")))?;
            cv.write_csv(BufWriter::new(f))?;
        }
        if let Some(eb) = &run.eb {
            fs::write(dir.join(format!("eb_priors_{stem}.jsonl")), eb.to_json_lines())?;
        }
    }
    Ok(())
}

fn run_trial(spec: &ExperimentSpec, data: &Dataset, seed: u64) -> Vec<SolverRun> {
    spec.solvers
        .iter()
        .map(|&s| run_solver(s, spec, data, seed))
        .collect()
}

/// Planted quadratic model: each trial draws a dataset, runs the selected
/// solvers and records coefficient and test MSE.
///
/// Output files: `summary.json`, `trace_t{t}_{solver}.csv`, `cv_t{t}.csv`
/// and, for empirical-Bayes AMP, `eb_priors_t{t}.jsonl`.
pub fn run_bayes_experiment(spec: &ExperimentSpec) -> Result<BayesReport> {
    check_kind(spec, ExperimentKind::Bayes)?;
    let runs: Vec<(TrialRecord, Vec<SolverRun>)> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(spec.seed, t);
            let model = BayesModelSpec {
                n: spec.n,
                m: spec.m,
                noise_var: spec.noise_var,
                priors: spec.priors,
                seed,
            };
            let data = gen_bayes_dataset(&model, spec.k_test)?;
            let runs = run_trial(spec, &data, seed);
            let record = TrialRecord {
                trial: t,
                seed,
                rate: None,
                m: spec.m,
                outcomes: runs.iter().map(|r| r.outcome.clone()).collect(),
            };
            Ok((record, runs))
        })
        .collect::<Result<_>>()?;

    let trials: Vec<TrialRecord> = runs.iter().map(|(r, _)| r.clone()).collect();
    let summary = spec
        .solvers
        .iter()
        .map(|&s| {
            let outs = trials.iter().flat_map(|t| t.outcomes.iter().filter(move |o| o.solver == s));
            (s, summarize(outs))
        })
        .collect();
    let report = BayesReport {
        spec: spec.clone(),
        summary,
        trials,
    };
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
        for (record, solver_runs) in &runs {
            write_trial_artifacts(dir, &format!("t{}", record.trial), solver_runs)?;
        }
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

/// Sinusoid targets at several measurement rates. Realization `t` uses the
/// same function and test rows at every rate.
///
/// Output files: `summary.json`, `rates.csv` (median test MSE per rate and
/// solver) and per-trial traces named `trace_r{rate}_t{t}_{solver}.csv`.
pub fn run_eb_experiment(spec: &ExperimentSpec) -> Result<EbReport> {
    check_kind(spec, ExperimentKind::EmpiricalBayes)?;
    let jobs: Vec<(usize, usize)> = (0..spec.rates.len())
        .flat_map(|r| (0..spec.trials).map(move |t| (r, t)))
        .collect();
    let runs: Vec<(TrialRecord, Vec<SolverRun>)> = jobs
        .into_par_iter()
        .map(|(r, t)| {
            let rate = spec.rates[r];
            let m = rows_for_rate(rate, spec.n)?;
            let seed = trial_seed(spec.seed, t);
            let model = SinusoidSpec {
                n: spec.n,
                m,
                weights: spec.sinusoid.weights,
                rho_prior: spec.sinusoid.rho_prior(spec.n),
                noise_var: spec.noise_var,
                seed,
                per_sample_phase: spec.sinusoid.per_sample_phase,
            };
            let data = gen_sinusoid_dataset(&model, spec.k_test)?;
            let runs = run_trial(spec, &data, seed);
            let record = TrialRecord {
                trial: t,
                seed,
                rate: Some(rate),
                m,
                outcomes: runs.iter().map(|r| r.outcome.clone()).collect(),
            };
            Ok((record, runs))
        })
        .collect::<Result<_>>()?;

    let trials: Vec<TrialRecord> = runs.iter().map(|(r, _)| r.clone()).collect();
    let rates = spec
        .rates
        .iter()
        .map(|&rate| {
            let at_rate: Vec<&TrialRecord> = trials.iter().filter(|t| t.rate == Some(rate)).collect();
            let solvers = spec
                .solvers
                .iter()
                .map(|&s| {
                    let outs = at_rate
                        .iter()
                        .flat_map(|t| t.outcomes.iter().filter(move |o| o.solver == s));
                    (s, summarize(outs))
                })
                .collect();
            Ok(RateSummary {
                rate,
                m: rows_for_rate(rate, spec.n)?,
                solvers,
            })
        })
        .collect::<Result<_>>()?;
    let report = EbReport {
        spec: spec.clone(),
        rates,
        trials,
    };
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
        for (record, solver_runs) in &runs {
            let stem = format!("r{}_t{}", record.rate.unwrap_or_default(), record.trial);
            write_trial_artifacts(dir, &stem, solver_runs)?;
        }
        write_rate_table(&dir.join("rates.csv"), &report)?;
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

/// CSV with a `rate` column, an `M` column and one median-test-MSE column per
/// solver.
pub fn write_rate_table(path: &Path, report: &EbReport) -> Result<()> {
    let mut header = vec!["rate".to_string(), "M".to_string()];
    header.extend(report.spec.solvers.iter().map(|s| s.name().to_string()));
    let mut lines = vec![header.join(",")];
    for r in &report.rates {
        let mut row = vec![r.rate.to_string(), r.m.to_string()];
        for s in &report.spec.solvers {
            row.push(r.solvers.get(s).map_or(String::new(), |v| v.median_test_mse.to_string()));
        }
        lines.push(row.join(","));
    }
    fs::write(path, lines.join("\n") + "\n")?;
    Ok(())
}

/// Spectrum of the normalized design over the configured `(M, N)` pairs.
///
/// Output files: `spectrum.csv` and `summary.json`.
pub fn run_spectrum_experiment(spec: &ExperimentSpec) -> Result<SpectrumExperimentReport> {
    check_kind(spec, ExperimentKind::Spectrum)?;
    let rows = spectrum_table(&spec.configs, spec.trials, spec.seed, spec.keep_all_svs)?;
    let report = SpectrumExperimentReport {
        spec: spec.clone(),
        rows,
    };
    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir)?;
        let f = File::create(dir.join("spectrum.csv"))?;
        write_spectrum_csv(&report.rows, BufWriter::new(f))?;
        write_json(&dir.join("summary.json"), &report)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn rate_rows() {
        assert_eq!(rows_for_rate(0.14, 30).unwrap(), 69);
        assert_eq!(rows_for_rate(0.28, 30).unwrap(), 139);
        assert_eq!(rows_for_rate(0.56, 30).unwrap(), 278);
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let spec = ExperimentSpec::defaults(ExperimentKind::Spectrum);
        assert!(run_bayes_experiment(&spec).is_err());
    }
}
