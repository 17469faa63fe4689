//! Nonlinear regression by quadratic feature expansion and approximate message
//! passing.
//!
//! A feature matrix `X` (M samples, N features) is expanded into the design
//! `X_Q = [1 | X | X^2 | cross products]` with `L = 1 + 2N + N(N-1)/2`
//! columns, normalized to unit column norm, and the coefficients of
//! `y = X_Q theta + z` are estimated with
//!
//! * Bayesian AMP using known spike-and-slab group priors ([`amp`]),
//! * empirical-Bayes AMP that fits those priors by EM on the fly ([`eb`]),
//! * LASSO by coordinate descent and a pseudoinverse ([`baselines`]).
//!
//! [`synthetic`] generates planted and sinusoid datasets, and [`spectrum`]
//! studies the singular values of the normalized design.

pub mod amp;
pub mod baselines;
pub mod denoise;
pub mod design;
pub mod eb;
pub mod error;
pub mod linalg;
pub mod matrix_io;
pub mod rng;
pub mod spectrum;
pub mod synthetic;

pub use amp::{amp_run, amp_run_monitored, AmpConfig, AmpState, Monitor, SolverResult, TraceEntry, Variant};
pub use baselines::{cross_validate_lambda, lasso_cd, pseudoinverse_solve, CvResult, LassoConfig};
pub use denoise::{BgPrior, ColumnPriors, GaussianPrior, GroupPriorSet, ScalarPrior};
pub use design::{
    expand_quadratic, normalize_columns, ColumnGroup, ExpandedDesign, FeatureMatrix, GroupKind,
    GroupedCoefficients, Scale,
};
pub use eb::{eb_amp_run, EbConfig, EbDiagnostics, EbResult};
pub use error::{Error, Result};
pub use spectrum::{predict_sigma1_sq, spectrum_table, SpectrumReport};
pub use synthetic::{BayesModelSpec, Dataset, DatasetSpec, SinusoidSpec};
