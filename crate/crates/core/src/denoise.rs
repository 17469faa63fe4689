//! Scalar MMSE denoisers for the channel `q = theta + N(0, sigma2)`.
//!
//! Two priors are supported: a zero-mean Gaussian (used for the DC
//! coefficient) and the Bernoulli-Gaussian spike-and-slab
//! `(1 - p) delta_0 + p N(0, tau)` used for the remaining groups.

use serde::{Deserialize, Serialize};

use crate::design::{ColumnGroup, ExpandedDesign, GroupKind};
use crate::error::{Error, Result};

pub const P_FLOOR: f64 = 1e-6;
pub const TAU_FLOOR: f64 = 1e-12;

/// Spike-and-slab prior `(1 - p) delta_0 + p N(0, tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BgPrior {
    pub p: f64,
    pub tau: f64,
}

impl BgPrior {
    pub fn new(p: f64, tau: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!("p must lie in (0, 1], got {p}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { p, tau })
    }

    /// Parameters clamped into the range every denoiser accepts.
    pub fn clamped(self) -> Self {
        Self {
            p: self.p.clamp(P_FLOOR, 1.0),
            tau: self.tau.max(TAU_FLOOR),
        }
    }
}

/// Zero-mean Gaussian prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub tau: f64,
}

impl GaussianPrior {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { tau })
    }
}

/// One prior per coefficient group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupPriorSet {
    pub dc: GaussianPrior,
    pub linear: BgPrior,
    pub quadratic: BgPrior,
    pub cross: BgPrior,
}

impl GroupPriorSet {
    /// Coefficient model of the planted Bayesian experiment: DC ~ N(0, 10),
    /// linear ~ 0.2 N(0, 1), quadratic ~ 0.2 N(0, 0.5), cross ~ 0.03 N(0, 0.1).
    pub fn planted() -> Self {
        Self {
            dc: GaussianPrior { tau: 10.0 },
            linear: BgPrior { p: 0.2, tau: 1.0 },
            quadratic: BgPrior { p: 0.2, tau: 0.5 },
            cross: BgPrior { p: 0.03, tau: 0.1 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        GaussianPrior::new(self.dc.tau)?;
        for bg in [self.linear, self.quadratic, self.cross] {
            BgPrior::new(bg.p, bg.tau)?;
        }
        Ok(())
    }

    pub fn bg(&self, kind: GroupKind) -> Option<BgPrior> {
        match kind {
            GroupKind::Dc => None,
            GroupKind::Linear => Some(self.linear),
            GroupKind::Quadratic => Some(self.quadratic),
            GroupKind::Cross => Some(self.cross),
        }
    }

    pub fn set_bg(&mut self, kind: GroupKind, prior: BgPrior) {
        match kind {
            GroupKind::Dc => self.dc = GaussianPrior { tau: prior.tau },
            GroupKind::Linear => self.linear = prior,
            GroupKind::Quadratic => self.quadratic = prior,
            GroupKind::Cross => self.cross = prior,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let priors: Self = serde_json::from_str(s)?;
        priors.validate()?;
        Ok(priors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("prior set serializes")
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "channel variance must be positive, got {sigma2}"
        )))
    }
}

/// Posterior summary of a Bernoulli-Gaussian coefficient.
#[derive(Debug, Clone, Copy)]
pub struct BgPosterior {
    /// `P(theta != 0 | q)`.
    pub responsibility: f64,
    pub mean: f64,
    pub derivative: f64,
    /// `E[theta^2 | q, theta != 0]`.
    pub slab_second_moment: f64,
}

/// Unchecked posterior computation; `p` and `tau` are clamped internally.
///
/// The odds of the spike are evaluated in log space:
/// `log((1-p)/p) + 0.5 log((tau+s2)/s2) - q^2 tau / (2 s2 (tau+s2))`.
#[inline]
pub fn bg_posterior(q: f64, sigma2: f64, prior: BgPrior) -> BgPosterior {
    let BgPrior { p, tau } = prior.clamped();
    let total = tau + sigma2;
    let gain = tau / total;
    let curvature = tau / (sigma2 * total);
    let gamma = if p >= 1.0 {
        1.0
    } else {
        let log_odds =
            ((1.0 - p) / p).ln() + 0.5 * (total / sigma2).ln() - 0.5 * q * q * curvature;
        if log_odds > 0.0 {
            let e = (-log_odds).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + log_odds.exp())
        }
    };
    let slab_mean = gain * q;
    BgPosterior {
        responsibility: gamma,
        mean: gamma * slab_mean,
        derivative: gain * gamma * (1.0 + (1.0 - gamma) * q * q * curvature),
        slab_second_moment: gain * sigma2 + slab_mean * slab_mean,
    }
}

/// `E[theta | q]` under a Bernoulli-Gaussian prior.
pub fn bg_denoise(q: f64, sigma2: f64, prior: BgPrior) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(bg_posterior(q, sigma2, prior).mean)
}

/// `d/dq E[theta | q]` under a Bernoulli-Gaussian prior.
pub fn bg_denoise_derivative(q: f64, sigma2: f64, prior: BgPrior) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(bg_posterior(q, sigma2, prior).derivative)
}

/// Wiener shrinkage `q tau / (tau + sigma2)`.
pub fn gaussian_denoise(q: f64, sigma2: f64, prior: GaussianPrior) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(q * gaussian_gain(sigma2, prior))
}

pub fn gaussian_denoise_derivative(sigma2: f64, prior: GaussianPrior) -> Result<f64> {
    check_sigma2(sigma2)?;
    Ok(gaussian_gain(sigma2, prior))
}

#[inline]
fn gaussian_gain(sigma2: f64, prior: GaussianPrior) -> f64 {
    let tau = prior.tau.max(TAU_FLOOR);
    tau / (tau + sigma2)
}

/// Prior attached to a single coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPrior {
    Gaussian(GaussianPrior),
    Bg(BgPrior),
}

impl ScalarPrior {
    /// Returns `(estimate, derivative)`.
    #[inline]
    pub fn denoise(&self, q: f64, sigma2: f64) -> (f64, f64) {
        match *self {
            ScalarPrior::Gaussian(g) => {
                let gain = gaussian_gain(sigma2, g);
                (gain * q, gain)
            }
            ScalarPrior::Bg(bg) => {
                let post = bg_posterior(q, sigma2, bg);
                (post.mean, post.derivative)
            }
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match *self {
            ScalarPrior::Gaussian(g) => ScalarPrior::Gaussian(GaussianPrior { tau: g.tau * factor }),
            ScalarPrior::Bg(bg) => ScalarPrior::Bg(BgPrior {
                p: bg.p,
                tau: bg.tau * factor,
            }),
        }
    }
}

/// Per-column priors consumed by the AMP solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnPriors {
    priors: Vec<ScalarPrior>,
}

impl ColumnPriors {
    /// The group priors applied unchanged to every column of the group.
    pub fn from_groups(priors: &GroupPriorSet, groups: &[ColumnGroup]) -> Self {
        let priors = groups
            .iter()
            .map(|g| match priors.bg(g.kind()) {
                None => ScalarPrior::Gaussian(priors.dc),
                Some(bg) => ScalarPrior::Bg(bg),
            })
            .collect();
        Self { priors }
    }

    /// Priors stated for original-scale coefficients, mapped onto the
    /// normalized design: `theta' = theta * norm`, so each slab variance is
    /// multiplied by the squared column norm.
    pub fn for_normalized_design(priors: &GroupPriorSet, design: &ExpandedDesign) -> Self {
        let base = Self::from_groups(priors, design.groups());
        Self {
            priors: base
                .priors
                .iter()
                .zip(design.norms())
                .map(|(p, &s)| p.scaled(s * s))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.priors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priors.is_empty()
    }

    pub fn get(&self, j: usize) -> &ScalarPrior {
        &self.priors[j]
    }

    pub fn as_slice(&self) -> &[ScalarPrior] {
        &self.priors
    }

    pub(crate) fn set(&mut self, j: usize, prior: ScalarPrior) {
        self.priors[j] = prior;
    }

    /// Entrywise denoising. Returns the estimates and the mean derivative,
    /// accumulated in index order.
    pub fn denoise(&self, q: &[f64], sigma2: f64, out: &mut [f64], derivs: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (((&qi, prior), o), d) in q.iter().zip(&self.priors).zip(out).zip(derivs) {
            let (est, der) = prior.denoise(qi, sigma2);
            *o = est;
            *d = der;
            total += der;
        }
        total / q.len().max(1) as f64
    }
}

/// Applies each group's denoiser entrywise. Returns the estimate and the
/// average derivative over all entries.
pub fn grouped_denoise(
    q: &[f64],
    sigma2: f64,
    priors: &GroupPriorSet,
    groups: &[ColumnGroup],
) -> Result<(Vec<f64>, f64)> {
    check_sigma2(sigma2)?;
    if q.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            what: "group map",
            expected: q.len(),
            actual: groups.len(),
        });
    }
    let column = ColumnPriors::from_groups(priors, groups);
    let mut est = vec![0.0; q.len()];
    let mut der = vec![0.0; q.len()];
    let mean = column.denoise(q, sigma2, &mut est, &mut der);
    Ok((est, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::column_groups;

    fn bg(p: f64, tau: f64) -> BgPrior {
        BgPrior::new(p, tau).unwrap()
    }

    #[test]
    fn zero_observation_gives_zero() {
        for &(p, tau, s2) in &[(0.2, 1.0, 0.25), (0.9, 3.0, 2.0), (1.0, 0.1, 5.0)] {
            assert_eq!(bg_denoise(0.0, s2, bg(p, tau)).unwrap(), 0.0);
        }
    }

    #[test]
    fn pure_gaussian_limit() {
        assert_eq!(bg_denoise(2.0, 1.0, bg(1.0, 1.0)).unwrap(), 1.0);
        for q in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(bg_denoise_derivative(q, 0.5, bg(1.0, 2.0)).unwrap(), 0.8);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let prior = bg(0.2, 1.0);
        let (q, s2, h) = (1.5, 0.25, 1e-5);
        let fd = (bg_denoise(q + h, s2, prior).unwrap() - bg_denoise(q - h, s2, prior).unwrap())
            / (2.0 * h);
        let an = bg_denoise_derivative(q, s2, prior).unwrap();
        assert!((fd - an).abs() < 1e-5, "fd {fd} analytic {an}");
    }

    #[test]
    fn derivative_at_origin_is_bounded_by_wiener_gain() {
        let d = bg_denoise_derivative(0.0, 1.0, bg(0.2, 1.0)).unwrap();
        assert!(d > 0.0 && d < 0.5, "{d}");
    }

    #[test]
    fn gaussian_examples() {
        let g = GaussianPrior::new(10.0).unwrap();
        assert_eq!(gaussian_denoise(0.0, 0.1, g).unwrap(), 0.0);
        assert!((gaussian_denoise(1.0, 0.1, g).unwrap() - 10.0 / 10.1).abs() < 1e-15);
        let eq = GaussianPrior::new(0.3).unwrap();
        assert_eq!(gaussian_denoise(0.8, 0.3, eq).unwrap(), 0.4);
    }

    #[test]
    fn invalid_channel_variance() {
        assert!(bg_denoise(1.0, 0.0, bg(0.5, 1.0)).is_err());
        assert!(bg_denoise_derivative(1.0, -1.0, bg(0.5, 1.0)).is_err());
        assert!(gaussian_denoise(1.0, 0.0, GaussianPrior { tau: 1.0 }).is_err());
        assert!(BgPrior::new(0.0, 1.0).is_err());
        assert!(BgPrior::new(0.5, 0.0).is_err());
    }

    #[test]
    fn large_observation_does_not_overflow() {
        let v = bg_denoise(1e3, 1e-6, bg(1e-4, 1.0)).unwrap();
        assert!(v.is_finite() && (v - 1e3).abs() < 1e-2);
        let d = bg_denoise_derivative(1e3, 1e-6, bg(1e-4, 1.0)).unwrap();
        assert!(d.is_finite());
    }

    #[test]
    fn grouped_denoise_examples() {
        let groups = column_groups(3).unwrap();
        let priors = GroupPriorSet::planted();
        let (est, mean) = grouped_denoise(&vec![0.0; groups.len()], 0.3, &priors, &groups).unwrap();
        assert!(est.iter().all(|&v| v == 0.0));
        assert!(mean > 0.0);

        let (dc, _) = grouped_denoise(&[1.7], 0.4, &priors, &[ColumnGroup::Dc]).unwrap();
        assert_eq!(dc[0], gaussian_denoise(1.7, 0.4, priors.dc).unwrap());

        let q: Vec<f64> = (0..groups.len()).map(|i| (i as f64 * 0.77).sin() * 2.0).collect();
        let (_, mean) = grouped_denoise(&q, 0.3, &priors, &groups).unwrap();
        let mut oracle = 0.0;
        for (qi, g) in q.iter().zip(&groups) {
            oracle += match priors.bg(g.kind()) {
                Some(b) => bg_denoise_derivative(*qi, 0.3, b).unwrap(),
                None => gaussian_denoise_derivative(0.3, priors.dc).unwrap(),
            };
        }
        oracle /= q.len() as f64;
        assert!((mean - oracle).abs() < 1e-10);

        assert!(grouped_denoise(&[1.0, 2.0], 0.3, &priors, &groups).is_err());
    }

    #[test]
    fn json_round_trip_keys() {
        let s = GroupPriorSet::planted().to_json();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["dc"]["tau"], 10.0);
        assert_eq!(v["cross"]["p"], 0.03);
        assert_eq!(GroupPriorSet::from_json(&s).unwrap(), GroupPriorSet::planted());
        assert!(GroupPriorSet::from_json(r#"{"dc":{"tau":1},"linear":{"p":2,"tau":1},"quadratic":{"p":0.1,"tau":1},"cross":{"p":0.1,"tau":1}}"#).is_err());
    }
}
