//! Experiment specifications.
//!
//! A spec is JSON. Only `kind` is required; every other field falls back to
//! the defaults of that kind, and the fully resolved spec is embedded in every
//! report.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use quadamp::spectrum::REFERENCE_CONFIGS;
use quadamp::{AmpConfig, BgPrior, EbConfig, GroupPriorSet, LassoConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Bayes,
    EmpiricalBayes,
    Spectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Amp,
    EbAmp,
    Lasso,
    Pseudoinverse,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Amp => "amp",
            SolverKind::EbAmp => "eb_amp",
            SolverKind::Lasso => "lasso",
            SolverKind::Pseudoinverse => "pseudoinverse",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "amp" => SolverKind::Amp,
            "eb_amp" => SolverKind::EbAmp,
            "lasso" => SolverKind::Lasso,
            "pseudoinverse" | "pinv" => SolverKind::Pseudoinverse,
            other => bail!("unknown solver {other:?}"),
        })
    }
}

/// Cross-validation settings of the LASSO baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub grid_points: usize,
}

/// Sinusoid target settings. `rho_tau = None` means `1 / (rho_p * n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidSettings {
    pub weights: [f64; 3],
    pub rho_p: f64,
    pub rho_tau: Option<f64>,
    pub per_sample_phase: bool,
}

impl SinusoidSettings {
    pub fn rho_prior(&self, n: usize) -> BgPrior {
        BgPrior {
            p: self.rho_p,
            tau: self.rho_tau.unwrap_or(1.0 / (self.rho_p * n as f64)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Number of raw features.
    pub n: usize,
    /// Training rows of the planted experiment.
    pub m: usize,
    /// Held-out rows.
    pub k_test: usize,
    /// Measurement rates `M / L` of the sinusoid experiment.
    pub rates: Vec<f64>,
    /// `(M, N)` pairs of the spectrum experiment.
    pub configs: Vec<(usize, usize)>,
    pub seed: u64,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    pub noise_var: f64,
    pub priors: GroupPriorSet,
    pub sinusoid: SinusoidSettings,
    pub amp: AmpConfig,
    pub eb: EbConfig,
    pub lasso: LassoConfig,
    pub cv: CvSettings,
    /// Keep full spectra in the spectrum report.
    pub keep_all_svs: bool,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            kind,
            n: 30,
            m: 520,
            k_test: 60,
            rates: Vec::new(),
            configs: Vec::new(),
            seed: 0,
            trials: 5,
            solvers: vec![SolverKind::Amp, SolverKind::Lasso],
            noise_var: 0.004,
            priors: GroupPriorSet::planted(),
            sinusoid: SinusoidSettings {
                weights: [0.1, 0.3, 0.6],
                rho_p: 0.05,
                rho_tau: None,
                per_sample_phase: false,
            },
            amp: AmpConfig::default(),
            eb: EbConfig::default(),
            lasso: LassoConfig::default(),
            cv: CvSettings {
                folds: 5,
                grid_points: 20,
            },
            keep_all_svs: false,
            output_dir: None,
        };
        match kind {
            ExperimentKind::Bayes => base,
            ExperimentKind::EmpiricalBayes => Self {
                k_test: 200,
                rates: vec![0.14, 0.28, 0.56],
                trials: 20,
                solvers: vec![SolverKind::EbAmp, SolverKind::Lasso, SolverKind::Pseudoinverse],
                noise_var: 1e-4,
                ..base
            },
            ExperimentKind::Spectrum => Self {
                configs: REFERENCE_CONFIGS.to_vec(),
                trials: 20,
                solvers: Vec::new(),
                ..base
            },
        }
    }

    /// Parses a possibly partial spec, filling unspecified fields with the
    /// defaults of its kind.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("spec is not valid JSON")?;
        let kind: ExperimentKind = serde_json::from_value(
            value
                .get("kind")
                .cloned()
                .context("spec is missing the \"kind\" field")?,
        )
        .context("unknown experiment kind")?;
        let mut merged = serde_json::to_value(Self::defaults(kind))?;
        merge(&mut merged, value);
        let spec: Self = serde_json::from_value(merged).context("invalid spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        match self.kind {
            ExperimentKind::Bayes | ExperimentKind::EmpiricalBayes => {
                if self.solvers.is_empty() {
                    bail!("at least one solver is required");
                }
                if self.n == 0 {
                    bail!("n must be at least 1");
                }
                if self.k_test == 0 {
                    bail!("k_test must be at least 1");
                }
                if !(self.noise_var > 0.0) {
                    bail!("noise_var must be positive");
                }
                self.amp.validate()?;
                self.lasso.validate()?;
                if self.cv.folds < 2 || self.cv.grid_points == 0 {
                    bail!("cross-validation needs folds >= 2 and a nonempty grid");
                }
            }
            ExperimentKind::Spectrum => {
                if self.configs.is_empty() {
                    bail!("spectrum experiment needs at least one (M, N) pair");
                }
                if self.configs.iter().any(|&(m, n)| m == 0 || n == 0) {
                    bail!("spectrum configurations need M, N >= 1");
                }
            }
        }
        match self.kind {
            ExperimentKind::Bayes => {
                if self.m == 0 {
                    bail!("m must be at least 1");
                }
                self.priors.validate()?;
            }
            ExperimentKind::EmpiricalBayes => {
                if self.rates.is_empty() || self.rates.iter().any(|r| !(*r > 0.0)) {
                    bail!("rates must be nonempty and positive");
                }
                self.eb.validate()?;
                let s = &self.sinusoid;
                if !(s.rho_p > 0.0 && s.rho_p <= 1.0) {
                    bail!("sinusoid rho_p must lie in (0, 1]");
                }
                if s.rho_tau.is_some_and(|t| !(t > 0.0)) {
                    bail!("sinusoid rho_tau must be positive");
                }
            }
            ExperimentKind::Spectrum => {}
        }
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_spec_gets_kind_defaults() {
        let s = ExperimentSpec::from_json(r#"{"kind": "empirical_bayes", "trials": 3}"#).unwrap();
        assert_eq!(s.trials, 3);
        assert_eq!(s.rates, vec![0.14, 0.28, 0.56]);
        assert_eq!(s.noise_var, 1e-4);
        let s = ExperimentSpec::from_json(r#"{"kind": "spectrum"}"#).unwrap();
        assert_eq!(s.configs.len(), 15);
    }

    #[test]
    fn nested_override_keeps_siblings() {
        let s = ExperimentSpec::from_json(r#"{"kind": "bayes", "amp": {"damping": 0.5}}"#).unwrap();
        assert_eq!(s.amp.damping, 0.5);
        assert_eq!(s.amp.max_iters, AmpConfig::default().max_iters);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ExperimentSpec::from_json(r#"{"kind": "bayes", "solvers": []}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"kind": "bayes", "trials": 0}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"trials": 2}"#).is_err());
        assert!(ExperimentSpec::from_json(r#"{"kind": "bayes", "bogus": 1}"#).is_err());
    }

    #[test]
    fn resolved_spec_round_trips() {
        let s = ExperimentSpec::defaults(ExperimentKind::EmpiricalBayes);
        assert_eq!(ExperimentSpec::from_json(&s.to_json()).unwrap(), s);
    }
}
