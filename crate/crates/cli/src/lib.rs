//! Reproducible experiment drivers for `quadamp`.
//!
//! Each experiment is described by an [`ExperimentSpec`] and returns an
//! in-memory report; when the spec names an output directory the report and
//! its per-trial artifacts are also written there.

pub mod experiments;
pub mod spec;

pub use experiments::{
    run_bayes_experiment, run_eb_experiment, run_spectrum_experiment, BayesReport, EbReport,
    SolverOutcome, SpectrumExperimentReport,
};
pub use spec::{ExperimentKind, ExperimentSpec, SolverKind};
