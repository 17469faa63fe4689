//! Seeded data generators.
//!
//! Two families are provided: the planted Bayesian model, where the target is
//! exactly quadratic with spike-and-slab coefficients, and a sum of three
//! sinusoids of sparse random projections, which lies outside the quadratic
//! hypothesis class.
//!
//! Every generator draws `m + k_test` rows and puts the first `k_test` rows in
//! the test split. Features, coefficients, noise and function parameters use
//! separate derived streams, so two datasets with the same seed and different
//! `m` share their test rows and their underlying function.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::denoise::{BgPrior, GroupPriorSet};
use crate::design::{
    expand_quadratic, normalize_columns, predict, ExpandedDesign, FeatureMatrix, GroupedCoefficients,
    Scale,
};
use crate::error::{Error, Result};
use crate::matrix_io::{read_csv_matrix, read_csv_vector, write_csv_matrix, write_csv_vector};
use crate::rng::{derive_seed, rng_from_seed, standard_normal, stream, Rng};

/// `m x n` matrix of i.i.d. standard normals, filled row by row.
pub fn gen_features(m: usize, n: usize, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = rng_from_seed(derive_seed(seed, stream::FEATURES));
    features_from(&mut rng, m, n)
}

fn features_from(rng: &mut Rng, m: usize, n: usize) -> Result<FeatureMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "feature matrix needs m, n >= 1, got {m} x {n}"
        )));
    }
    let data = Array2::from_shape_simple_fn((m, n), || standard_normal(rng));
    FeatureMatrix::new(data)
}

fn check_generative_bg(prior: BgPrior, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&prior.p) || !(prior.tau >= 0.0) || !prior.tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "{what} prior needs p in [0, 1] and finite tau >= 0, got {prior:?}"
        )));
    }
    Ok(())
}

/// One spike-and-slab draw. Both the selector and the slab value are always
/// drawn so the stream position does not depend on the outcome.
fn draw_bg(rng: &mut Rng, prior: BgPrior) -> f64 {
    let u: f64 = rng.random();
    let z = standard_normal(rng);
    if u < prior.p {
        prior.tau.sqrt() * z
    } else {
        0.0
    }
}

/// Independent coefficient draws from the group priors, in storage order.
pub fn gen_bayes_coefficients(n: usize, priors: &GroupPriorSet, seed: u64) -> Result<GroupedCoefficients> {
    if n == 0 {
        return Err(Error::InvalidArgument("need n >= 1".into()));
    }
    if !(priors.dc.tau >= 0.0) {
        return Err(Error::InvalidArgument("DC variance must be nonnegative".into()));
    }
    check_generative_bg(priors.linear, "linear")?;
    check_generative_bg(priors.quadratic, "quadratic")?;
    check_generative_bg(priors.cross, "cross")?;
    let mut rng = rng_from_seed(derive_seed(seed, stream::COEFFICIENTS));
    let dc = priors.dc.tau.sqrt() * standard_normal(&mut rng);
    let linear = (0..n).map(|_| draw_bg(&mut rng, priors.linear)).collect();
    let quadratic = (0..n).map(|_| draw_bg(&mut rng, priors.quadratic)).collect();
    let cross = (0..n * (n - 1) / 2)
        .map(|_| draw_bg(&mut rng, priors.cross))
        .collect();
    Ok(GroupedCoefficients {
        dc,
        linear,
        quadratic,
        cross,
        scale: Scale::Original,
    })
}

fn check_noise(noise_var: f64) -> Result<()> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    Ok(())
}

fn check_split(m: usize, k_test: usize) -> Result<()> {
    if m == 0 || k_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "need at least one training and one test row, got m = {m}, k_test = {k_test}"
        )));
    }
    Ok(())
}

fn noise(len: usize, noise_var: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(derive_seed(seed, stream::NOISE));
    let s = noise_var.sqrt();
    (0..len).map(|_| s * standard_normal(&mut rng)).collect()
}

/// Planted quadratic model `y = X_Q theta + z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BayesModelSpec {
    pub n: usize,
    /// Training rows.
    pub m: usize,
    pub noise_var: f64,
    pub priors: GroupPriorSet,
    pub seed: u64,
}

impl BayesModelSpec {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        Self {
            n,
            m,
            noise_var: 0.004,
            priors: GroupPriorSet::planted(),
            seed,
        }
    }
}

/// Splits `total` generated rows into the leading test block and the training rest.
fn split_rows(x: FeatureMatrix, y: Vec<f64>, k_test: usize) -> Result<(FeatureMatrix, Vec<f64>, FeatureMatrix, Vec<f64>)> {
    let total = x.m();
    let x_test = x.rows(0..k_test)?;
    let x_train = x.rows(k_test..total)?;
    let y_test = y[..k_test].to_vec();
    let y_train = y[k_test..].to_vec();
    Ok((x_train, y_train, x_test, y_test))
}

pub fn gen_bayes_dataset(spec: &BayesModelSpec, k_test: usize) -> Result<Dataset> {
    check_noise(spec.noise_var)?;
    check_split(spec.m, k_test)?;
    let total = spec.m + k_test;
    let x = gen_features(total, spec.n, spec.seed)?;
    let theta = gen_bayes_coefficients(spec.n, &spec.priors, spec.seed)?;
    let clean = predict(&expand_quadratic(&x)?, &theta)?;
    let z = noise(total, spec.noise_var, spec.seed);
    let y: Vec<f64> = clean.iter().zip(&z).map(|(a, b)| a + b).collect();
    let (x_train, y_train, x_test, y_test) = split_rows(x, y, k_test)?;
    Ok(Dataset {
        x_train,
        y_train,
        x_test,
        y_test,
        truth: Some(theta),
    })
}

/// `y = sum_i w_i sin(X rho_i + phi_i) + z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub n: usize,
    /// Training rows.
    pub m: usize,
    pub weights: [f64; 3],
    /// Prior of every entry of each projection vector `rho_i`.
    pub rho_prior: BgPrior,
    pub noise_var: f64,
    pub seed: u64,
    /// Draw an independent phase per sample instead of one per sinusoid.
    #[serde(default)]
    pub per_sample_phase: bool,
}

impl SinusoidSpec {
    /// Weights (0.1, 0.3, 0.6), `rho` entries `0.05 N(0, 1/(0.05 n))`, noise
    /// variance `1e-4`.
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        let p = 0.05;
        Self {
            n,
            m,
            weights: [0.1, 0.3, 0.6],
            rho_prior: BgPrior {
                p,
                tau: 1.0 / (p * n.max(1) as f64),
            },
            noise_var: 1e-4,
            seed,
            per_sample_phase: false,
        }
    }
}

/// Projection vectors and phases of a sinusoid target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFunction {
    pub weights: [f64; 3],
    pub rho: [Vec<f64>; 3],
    /// Phase of each sinusoid; unused when phases are drawn per sample.
    pub phase: [f64; 3],
}

impl SinusoidFunction {
    pub fn draw(spec: &SinusoidSpec) -> Result<Self> {
        check_generative_bg(spec.rho_prior, "rho")?;
        let mut rng = rng_from_seed(derive_seed(spec.seed, stream::FUNCTION));
        let mut rho: [Vec<f64>; 3] = Default::default();
        let mut phase = [0.0; 3];
        for i in 0..3 {
            rho[i] = (0..spec.n).map(|_| draw_bg(&mut rng, spec.rho_prior)).collect();
            phase[i] = rng.random::<f64>() * TAU;
        }
        Ok(Self {
            weights: spec.weights,
            rho,
            phase,
        })
    }

    /// Noiseless value at one feature row with the given phases.
    pub fn eval(&self, x: &[f64], phase: [f64; 3]) -> f64 {
        let mut y = 0.0;
        for i in 0..3 {
            let arg: f64 = x.iter().zip(&self.rho[i]).map(|(a, b)| a * b).sum();
            y += self.weights[i] * (arg + phase[i]).sin();
        }
        y
    }
}

pub fn gen_sinusoid_dataset(spec: &SinusoidSpec, k_test: usize) -> Result<Dataset> {
    check_noise(spec.noise_var)?;
    check_split(spec.m, k_test)?;
    if spec.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("sinusoid weights"));
    }
    let total = spec.m + k_test;
    let f = SinusoidFunction::draw(spec)?;
    let x = gen_features(total, spec.n, spec.seed)?;
    let mut phase_rng = rng_from_seed(derive_seed(spec.seed, stream::PHASE));
    let z = noise(total, spec.noise_var, spec.seed);
    let y: Vec<f64> = x
        .data()
        .rows()
        .into_iter()
        .zip(&z)
        .map(|(row, zi)| {
            let phase = if spec.per_sample_phase {
                [0; 3].map(|_| phase_rng.random::<f64>() * TAU)
            } else {
                f.phase
            };
            let row = row.to_vec();
            f.eval(&row, phase) + zi
        })
        .collect();
    let (x_train, y_train, x_test, y_test) = split_rows(x, y, k_test)?;
    Ok(Dataset {
        x_train,
        y_train,
        x_test,
        y_test,
        truth: None,
    })
}

/// Generator settings stored next to a saved dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DatasetSpec {
    Bayes { model: BayesModelSpec, k_test: usize },
    Sinusoid { model: SinusoidSpec, k_test: usize },
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Bayes { model, k_test } => gen_bayes_dataset(model, *k_test),
            DatasetSpec::Sinusoid { model, k_test } => gen_sinusoid_dataset(model, *k_test),
        }
    }
}

/// Training and held-out rows. `truth` is known only for the planted model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_train: FeatureMatrix,
    pub y_train: Vec<f64>,
    pub x_test: FeatureMatrix,
    pub y_test: Vec<f64>,
    pub truth: Option<GroupedCoefficients>,
}

/// Expanded designs ready for the solvers.
#[derive(Debug, Clone)]
pub struct PreparedDesigns {
    /// Column-normalized training design.
    pub train: ExpandedDesign,
    /// Raw expanded test design, paired with original-scale coefficients.
    pub test_raw: ExpandedDesign,
}

impl Dataset {
    pub fn k_test(&self) -> usize {
        self.x_test.m()
    }

    pub fn prepare(&self) -> Result<PreparedDesigns> {
        let train = normalize_columns(&expand_quadratic(&self.x_train)?)?;
        let test_raw = expand_quadratic(&self.x_test)?;
        Ok(PreparedDesigns { train, test_raw })
    }

    /// Writes `x_train.csv`, `y_train.csv`, `x_test.csv`, `y_test.csv`,
    /// `spec.json` and, when known, `truth.json`.
    pub fn save(&self, dir: &Path, spec: &DatasetSpec) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv_matrix(&dir.join("x_train.csv"), self.x_train.data())?;
        write_csv_vector(&dir.join("y_train.csv"), &self.y_train)?;
        write_csv_matrix(&dir.join("x_test.csv"), self.x_test.data())?;
        write_csv_vector(&dir.join("y_test.csv"), &self.y_test)?;
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(spec)?)?;
        let truth_path = dir.join("truth.json");
        match &self.truth {
            Some(t) => fs::write(truth_path, serde_json::to_string_pretty(t)?)?,
            None if truth_path.exists() => fs::remove_file(truth_path)?,
            None => {}
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Dataset, Option<DatasetSpec>)> {
        let x_train = FeatureMatrix::new(read_csv_matrix(&dir.join("x_train.csv"))?)?;
        let y_train = read_csv_vector(&dir.join("y_train.csv"))?;
        let x_test = FeatureMatrix::new(read_csv_matrix(&dir.join("x_test.csv"))?)?;
        let y_test = read_csv_vector(&dir.join("y_test.csv"))?;
        if y_train.len() != x_train.m() {
            return Err(Error::DimensionMismatch {
                what: "training targets",
                expected: x_train.m(),
                actual: y_train.len(),
            });
        }
        if y_test.len() != x_test.m() {
            return Err(Error::DimensionMismatch {
                what: "test targets",
                expected: x_test.m(),
                actual: y_test.len(),
            });
        }
        if x_test.n() != x_train.n() {
            return Err(Error::DimensionMismatch {
                what: "test feature columns",
                expected: x_train.n(),
                actual: x_test.n(),
            });
        }
        let truth_path = dir.join("truth.json");
        let truth = if truth_path.exists() {
            Some(serde_json::from_str(&fs::read_to_string(truth_path)?)?)
        } else {
            None
        };
        let spec_path = dir.join("spec.json");
        let spec = if spec_path.exists() {
            Some(serde_json::from_str(&fs::read_to_string(spec_path)?)?)
        } else {
            None
        };
        Ok((
            Dataset {
                x_train,
                y_train,
                x_test,
                y_test,
                truth,
            },
            spec,
        ))
    }
}

/// `||y_test - X_test theta||^2 / K`.
pub fn test_mse(x_test: &ExpandedDesign, theta: &GroupedCoefficients, y_test: &[f64]) -> Result<f64> {
    if y_test.len() != x_test.m() {
        return Err(Error::DimensionMismatch {
            what: "test targets",
            expected: x_test.m(),
            actual: y_test.len(),
        });
    }
    if y_test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    let pred = predict(x_test, theta)?;
    let se: f64 = y_test.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(se / y_test.len() as f64)
}
