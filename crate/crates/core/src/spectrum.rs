//! Singular-value spectrum of the normalized quadratic design.
//!
//! The top singular value is dominated by the DC column and the square
//! columns, which share a nonzero mean. The closed-form prediction
//! `1 + N/3 + N(N+1)/(2M)` estimates its energy and behaves as a lower bound.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{column_count, expand_quadratic, normalize_columns, ExpandedDesign};
use crate::error::{Error, Result};
use crate::linalg::singular_values;
use crate::rng::{derive_seed, stream};
use crate::synthetic::gen_features;

/// The fifteen `(M, N)` configurations of the reference spectrum study.
pub const REFERENCE_CONFIGS: [(usize, usize); 15] = [
    (1000, 10),
    (1500, 15),
    (2000, 20),
    (3000, 20),
    (3000, 30),
    (4000, 40),
    (4500, 50),
    (5000, 60),
    (5500, 70),
    (5000, 80),
    (6000, 80),
    (8000, 80),
    (8000, 90),
    (6000, 100),
    (8000, 100),
];

/// `1 + N/3 + N(N+1)/(2M)`.
pub fn predict_sigma1_sq(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("need m, n >= 1, got ({m}, {n})")));
    }
    let (m, n) = (m as f64, n as f64);
    Ok(1.0 + n / 3.0 + n * (n + 1.0) / (2.0 * m))
}

/// All singular values of a normalized design, descending.
pub fn empirical_spectrum(design: &ExpandedDesign) -> Result<Vec<f64>> {
    if !design.is_normalized() {
        return Err(Error::InvalidArgument(
            "spectrum is defined for the column-normalized design".into(),
        ));
    }
    let mut s = singular_values(design.data())?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub m: usize,
    pub n: usize,
    pub l: usize,
    /// Mean of the squared top singular value over trials.
    pub sigma1_sq_empirical: f64,
    pub sigma1_sq_predicted: f64,
    /// Mean of the squared second singular value over trials.
    pub sigma2_sq_mean: f64,
    pub trials: usize,
    pub sigma1_sq_per_trial: Vec<f64>,
    pub sigma2_sq_per_trial: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all_svs: Option<Vec<Vec<f64>>>,
}

/// Seed of trial `t` of configuration `row` under `master`.
pub fn trial_seed(master: u64, row: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(master, stream::TRIAL ^ ((row as u64) << 32)), trial as u64)
}

/// Averages the top of the spectrum over `trials` Gaussian feature draws per
/// configuration. Trials run in parallel; results are gathered in trial order.
pub fn spectrum_table(
    rows: &[(usize, usize)],
    trials: usize,
    seed: u64,
    keep_all: bool,
) -> Result<Vec<SpectrumReport>> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    rows.iter()
        .enumerate()
        .map(|(row_idx, &(m, n))| {
            let l = column_count(n)?;
            let predicted = predict_sigma1_sq(m, n)?;
            let spectra: Vec<Vec<f64>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let x = gen_features(m, n, trial_seed(seed, row_idx, t))?;
                    empirical_spectrum(&normalize_columns(&expand_quadratic(&x)?)?)
                })
                .collect::<Result<_>>()?;
            let s1: Vec<f64> = spectra.iter().map(|s| s[0] * s[0]).collect();
            let s2: Vec<f64> = spectra
                .iter()
                .map(|s| s.get(1).map_or(0.0, |v| v * v))
                .collect();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            Ok(SpectrumReport {
                m,
                n,
                l,
                sigma1_sq_empirical: mean(&s1),
                sigma1_sq_predicted: predicted,
                sigma2_sq_mean: mean(&s2),
                trials,
                sigma1_sq_per_trial: s1,
                sigma2_sq_per_trial: s2,
                all_svs: keep_all.then_some(spectra),
            })
        })
        .collect()
}

/// CSV with columns `M,N,L,sigma1_sq_empirical,sigma1_sq_pred`.
pub fn write_spectrum_csv<W: Write>(reports: &[SpectrumReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["M", "N", "L", "sigma1_sq_empirical", "sigma1_sq_pred"])?;
    for r in reports {
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.l.to_string(),
            format!("{:.4}", r.sigma1_sq_empirical),
            format!("{:.4}", r.sigma1_sq_predicted),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Scale;
    use ndarray::Array2;

    #[test]
    fn prediction_formula() {
        assert!((predict_sigma1_sq(1000, 10).unwrap() - (1.0 + 10.0 / 3.0 + 110.0 / 2000.0)).abs() < 1e-15);
        assert!((predict_sigma1_sq(1_000_000_000, 3).unwrap() - 2.0).abs() < 1e-8);
        assert!(predict_sigma1_sq(0, 3).is_err());
    }

    #[test]
    fn identity_design_has_unit_spectrum() {
        let d = ExpandedDesign::from_parts(Array2::eye(3), 1, vec![1.0; 3], Scale::Normalized).unwrap();
        for s in empirical_spectrum(&d).unwrap() {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_design_rejected() {
        let d = ExpandedDesign::from_parts(Array2::eye(3), 1, vec![1.0; 3], Scale::Original).unwrap();
        assert!(empirical_spectrum(&d).is_err());
    }

    #[test]
    fn single_trial_reproducible() {
        let a = spectrum_table(&[(60, 3)], 1, 4, true).unwrap();
        let b = spectrum_table(&[(60, 3)], 1, 4, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].l, 10);
        assert_eq!(a[0].all_svs.as_ref().unwrap()[0].len(), 10);
    }
}
