//! Empirical-Bayes AMP.
//!
//! Before each denoising step the pseudo-data of every Bernoulli-Gaussian
//! group is treated as samples of the scalar channel
//! `q = theta + N(0, sigma2)` and a few EM steps refit `(p, tau)` for that
//! group. The DC coefficient has a single observation, so its Gaussian
//! variance uses the moment estimate `max(q_dc^2 - sigma2, tau_min)`.

use serde::{Deserialize, Serialize};

use crate::amp::{run_loop, AmpConfig, Monitor, SolverResult};
use crate::denoise::{bg_posterior, BgPrior, ColumnPriors, GaussianPrior, GroupPriorSet, ScalarPrior};
use crate::design::{group_ranges, ExpandedDesign, GroupKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EbConfig {
    /// EM steps per AMP iteration; 0 disables learning entirely.
    pub em_steps_per_amp_iter: usize,
    pub p_bounds: (f64, f64),
    pub tau_bounds: (f64, f64),
    pub init: GroupPriorSet,
}

impl Default for EbConfig {
    fn default() -> Self {
        let bg = BgPrior { p: 0.1, tau: 1.0 };
        Self {
            em_steps_per_amp_iter: 5,
            p_bounds: (1e-4, 1.0),
            tau_bounds: (1e-8, 1e4),
            init: GroupPriorSet {
                dc: GaussianPrior { tau: 1.0 },
                linear: bg,
                quadratic: bg,
                cross: bg,
            },
        }
    }
}

impl EbConfig {
    pub fn validate(&self) -> Result<()> {
        let (p_lo, p_hi) = self.p_bounds;
        let (t_lo, t_hi) = self.tau_bounds;
        if !(p_lo > 0.0 && p_lo <= p_hi && p_hi <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p bounds must satisfy 0 < lo <= hi <= 1, got {:?}",
                self.p_bounds
            )));
        }
        if !(t_lo > 0.0 && t_lo <= t_hi) {
            return Err(Error::InvalidArgument(format!(
                "tau bounds must satisfy 0 < lo <= hi, got {:?}",
                self.tau_bounds
            )));
        }
        self.init.validate()
    }

    fn clamp(&self, prior: BgPrior) -> BgPrior {
        BgPrior {
            p: prior.p.clamp(self.p_bounds.0, self.p_bounds.1),
            tau: prior.tau.clamp(self.tau_bounds.0, self.tau_bounds.1),
        }
    }
}

/// Result of [`em_update_bg`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    pub prior: BgPrior,
    /// Marginal log-likelihood before the first step and after each step.
    pub loglik: Vec<f64>,
}

fn log_normal_pdf(x: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + x * x / var)
}

/// `sum_i log[(1 - p) N(q_i; 0, s2) + p N(q_i; 0, tau + s2)]`.
pub fn bg_marginal_loglik(q: &[f64], sigma2: f64, prior: BgPrior) -> f64 {
    let BgPrior { p, tau } = prior;
    let mut total = 0.0;
    for &qi in q {
        let slab = p.ln() + log_normal_pdf(qi, tau + sigma2);
        total += if p >= 1.0 {
            slab
        } else {
            let spike = (1.0 - p).ln() + log_normal_pdf(qi, sigma2);
            let hi = spike.max(slab);
            hi + ((spike - hi).exp() + (slab - hi).exp()).ln()
        };
    }
    total
}

/// Refits a Bernoulli-Gaussian prior to the pseudo-data of one group.
pub fn em_update_bg(
    q_group: &[f64],
    sigma2: f64,
    current: BgPrior,
    config: &EbConfig,
) -> Result<EmOutcome> {
    if q_group.is_empty() {
        return Err(Error::InvalidArgument("EM update needs a nonempty group".into()));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "channel variance must be positive, got {sigma2}"
        )));
    }
    let mut prior = config.clamp(current);
    let mut loglik = Vec::with_capacity(config.em_steps_per_amp_iter + 1);
    loglik.push(bg_marginal_loglik(q_group, sigma2, prior));
    for _ in 0..config.em_steps_per_amp_iter {
        let mut resp_sum = 0.0;
        let mut weighted_second = 0.0;
        for &qi in q_group {
            let post = bg_posterior(qi, sigma2, prior);
            resp_sum += post.responsibility;
            weighted_second += post.responsibility * post.slab_second_moment;
        }
        let p = resp_sum / q_group.len() as f64;
        let tau = if resp_sum > 0.0 {
            weighted_second / resp_sum
        } else {
            prior.tau
        };
        prior = config.clamp(BgPrior { p, tau });
        loglik.push(bg_marginal_loglik(q_group, sigma2, prior));
    }
    Ok(EmOutcome { prior, loglik })
}

/// Per-iteration record of the learned priors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EbDiagnostics {
    pub learned: Vec<GroupPriorSet>,
    /// EM log-likelihood sequences, one per (AMP iteration, BG group).
    pub loglik: Vec<Vec<f64>>,
}

impl EbDiagnostics {
    /// Largest decrease of the marginal log-likelihood across any EM step.
    pub fn worst_em_decrease(&self) -> f64 {
        self.loglik
            .iter()
            .flat_map(|seq| seq.windows(2).map(|w| w[0] - w[1]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// JSON-lines rendering: one prior set per AMP iteration.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.learned.iter().enumerate() {
            let line = serde_json::json!({ "iteration": i + 1, "priors": p });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EbResult {
    pub result: SolverResult,
    pub diagnostics: EbDiagnostics,
}

/// AMP with groupwise maximum-likelihood prior refits.
pub fn eb_amp_run(
    design: &ExpandedDesign,
    y: &[f64],
    amp: &AmpConfig,
    eb: &EbConfig,
) -> Result<EbResult> {
    eb_amp_run_monitored(design, y, amp, eb, Monitor::default())
}

pub fn eb_amp_run_monitored(
    design: &ExpandedDesign,
    y: &[f64],
    amp: &AmpConfig,
    eb: &EbConfig,
    monitor: Monitor<'_>,
) -> Result<EbResult> {
    eb.validate()?;
    let priors = ColumnPriors::from_groups(&eb.init, design.groups());
    if eb.em_steps_per_amp_iter == 0 {
        let result = run_loop(design, y, priors, amp, monitor, None)?;
        return Ok(EbResult {
            result,
            diagnostics: EbDiagnostics::default(),
        });
    }

    let ranges = group_ranges(design.n());
    let mut current = eb.init;
    let mut diagnostics = EbDiagnostics::default();
    let mut hook = |q: &[f64], sigma2: f64, column: &mut ColumnPriors| -> Result<()> {
        for kind in [GroupKind::Linear, GroupKind::Quadratic, GroupKind::Cross] {
            let range = ranges[kind.index()].clone();
            if range.is_empty() {
                continue;
            }
            let prior = current.bg(kind).expect("BG group");
            let outcome = em_update_bg(&q[range.clone()], sigma2, prior, eb)?;
            current.set_bg(kind, outcome.prior);
            diagnostics.loglik.push(outcome.loglik);
            for j in range {
                column.set(j, ScalarPrior::Bg(outcome.prior));
            }
        }
        let dc_tau = (q[0] * q[0] - sigma2).max(eb.tau_bounds.0);
        current.dc = GaussianPrior { tau: dc_tau };
        column.set(0, ScalarPrior::Gaussian(current.dc));
        diagnostics.learned.push(current);
        Ok(())
    };
    let result = run_loop(design, y, priors, amp, monitor, Some(&mut hook))?;
    Ok(EbResult { result, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn zero_data_drives_p_down() {
        let cfg = EbConfig::default();
        let mut prior = BgPrior { p: 0.5, tau: 1.0 };
        let q = vec![0.0; 200];
        let mut last = prior.p;
        for _ in 0..5 {
            let single = EbConfig { em_steps_per_amp_iter: 1, ..cfg };
            prior = em_update_bg(&q, 1.0, prior, &single).unwrap().prior;
            assert!(prior.p < last);
            last = prior.p;
        }
    }

    #[test]
    fn clamps_to_p_max_when_everything_is_large() {
        let cfg = EbConfig { p_bounds: (1e-4, 0.9), ..EbConfig::default() };
        let q: Vec<f64> = (0..100).map(|i| 50.0 + i as f64).collect();
        let out = em_update_bg(&q, 0.01, BgPrior { p: 0.5, tau: 1.0 }, &cfg).unwrap();
        assert_eq!(out.prior.p, 0.9);
        let cfg1 = EbConfig::default();
        let out = em_update_bg(&q, 0.01, BgPrior { p: 0.5, tau: 1.0 }, &cfg1).unwrap();
        assert_eq!(out.prior.p, 1.0);
    }

    #[test]
    fn empty_group_and_bad_variance() {
        let cfg = EbConfig::default();
        assert!(em_update_bg(&[], 1.0, BgPrior { p: 0.5, tau: 1.0 }, &cfg).is_err());
        assert!(em_update_bg(&[1.0], 0.0, BgPrior { p: 0.5, tau: 1.0 }, &cfg).is_err());
    }

    #[test]
    fn loglik_is_monotone_on_mixture_data() {
        let mut r = rng::rng_from_seed(11);
        let q: Vec<f64> = (0..2000)
            .map(|_| {
                let theta = if r.random::<f64>() < 0.3 { 2.0 * rng::standard_normal(&mut r) } else { 0.0 };
                theta + 0.5 * rng::standard_normal(&mut r)
            })
            .collect();
        let cfg = EbConfig { em_steps_per_amp_iter: 30, ..EbConfig::default() };
        let out = em_update_bg(&q, 0.25, BgPrior { p: 0.9, tau: 0.1 }, &cfg).unwrap();
        for w in out.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn bounds_validation() {
        let bad = EbConfig { p_bounds: (0.5, 0.1), ..EbConfig::default() };
        assert!(bad.validate().is_err());
        let bad = EbConfig { tau_bounds: (0.0, 1.0), ..EbConfig::default() };
        assert!(bad.validate().is_err());
    }
}
