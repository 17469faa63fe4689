mod common;

use quadamp::design::predict;
use quadamp::spectrum::{empirical_spectrum, REFERENCE_CONFIGS};
use quadamp::synthetic::{gen_bayes_coefficients, gen_bayes_dataset, gen_features, gen_sinusoid_dataset, test_mse};
use quadamp::{
    expand_quadratic, normalize_columns, predict_sigma1_sq, spectrum_table, BayesModelSpec, BgPrior,
    GroupPriorSet, SinusoidSpec,
};

/// Predicted top energies of the reference configurations, two decimals.
const PREDICTED: [f64; 15] = [
    4.39, 6.08, 7.77, 7.74, 11.16, 14.54, 17.95, 21.37, 24.79, 28.31, 28.21, 28.07, 31.51, 35.18, 34.96,
];

#[test]
fn predicted_top_energy_matches_reference_table() {
    for (&(m, n), &want) in REFERENCE_CONFIGS.iter().zip(&PREDICTED) {
        let got = predict_sigma1_sq(m, n).unwrap();
        // Agreement to two decimals; (3000, 30) sits exactly on 11.155.
        assert!((got - want).abs() <= 0.005 + 1e-12, "M={m} N={n}: {got}");
    }
    let limit = predict_sigma1_sq(1_000_000_000, 3).unwrap();
    assert!((limit - 2.0).abs() < 1e-8);
}

#[test]
fn spectrum_obeys_frobenius_identity_and_lower_bound() {
    let x = gen_features(1000, 10, 3).unwrap();
    let d = normalize_columns(&expand_quadratic(&x).unwrap()).unwrap();
    let s = empirical_spectrum(&d).unwrap();
    assert_eq!(s.len(), 66);
    assert!(s.windows(2).all(|w| w[0] >= w[1]) && s[65] >= 0.0);
    let energy: f64 = s.iter().map(|v| v * v).sum();
    assert!((energy - 66.0).abs() <= 1e-9 * 66.0);
    assert!(s[0] * s[0] >= 4.39);
}

#[test]
fn smallest_configuration_shows_gap_and_excess_energy() {
    let report = &spectrum_table(&[(1000, 10)], 20, 0, false).unwrap()[0];
    let excess = report.sigma1_sq_empirical - report.sigma1_sq_predicted;
    assert!((0.3..=1.2).contains(&excess), "excess {excess}");
    for (s1, s2) in report.sigma1_sq_per_trial.iter().zip(&report.sigma2_sq_per_trial) {
        assert!(*s1 >= report.sigma1_sq_predicted - 0.05);
        assert!(*s1 >= 2.0 * s2);
    }
}

#[test]
fn spectrum_table_is_independent_of_thread_count() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| spectrum_table(&[(200, 6), (300, 8)], 4, 9, true).unwrap())
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn feature_moments() {
    let x = gen_features(100_000, 1, 12).unwrap();
    let v: Vec<f64> = x.data().iter().copied().collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!(mean.abs() < 0.02);
    assert!((var - 1.0).abs() < 0.02);
    assert_ne!(gen_features(5, 3, 1).unwrap(), gen_features(5, 3, 2).unwrap());
}

#[test]
fn planted_coefficient_energies_and_sparsity() {
    let n = 100;
    let draws = 1000;
    let set = GroupPriorSet::planted();
    let mut energy = [0.0; 4];
    let mut nonzero = [0.0; 3];
    for seed in 0..draws {
        let t = gen_bayes_coefficients(n, &set, seed).unwrap();
        let sq = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let nz = |v: &[f64]| v.iter().filter(|a| **a != 0.0).count() as f64 / v.len() as f64;
        energy[0] += t.dc * t.dc;
        energy[1] += sq(&t.linear);
        energy[2] += sq(&t.quadratic);
        energy[3] += sq(&t.cross);
        nonzero[0] += nz(&t.linear);
        nonzero[1] += nz(&t.quadratic);
        nonzero[2] += nz(&t.cross);
    }
    let want = [10.0, 20.0, 10.0, 14.85];
    for (e, w) in energy.iter().zip(want) {
        let mean = e / draws as f64;
        assert!((mean - w).abs() <= 0.1 * w, "energy {mean} vs {w}");
    }
    for (f, p) in nonzero.iter().zip([0.2, 0.2, 0.03]) {
        assert!((f / draws as f64 - p).abs() <= 0.02);
    }
    let empty = GroupPriorSet {
        cross: BgPrior { p: 0.0, tau: 0.1 },
        ..set
    };
    assert!(gen_bayes_coefficients(n, &empty, 1).unwrap().cross.iter().all(|&v| v == 0.0));
}

#[test]
fn noiseless_targets_equal_the_model() {
    let mut spec = BayesModelSpec::new(6, 40, 13);
    spec.noise_var = 1e-300;
    let data = gen_bayes_dataset(&spec, 10).unwrap();
    let clean = predict(&expand_quadratic(&data.x_train).unwrap(), data.truth.as_ref().unwrap()).unwrap();
    for (a, b) in data.y_train.iter().zip(clean.iter()) {
        assert!((a - b).abs() <= 1e-10);
    }
    assert_eq!(data, gen_bayes_dataset(&spec, 10).unwrap());
}

#[test]
fn full_size_planted_dataset() {
    let data = gen_bayes_dataset(&BayesModelSpec::new(100, 5400, 14), 600).unwrap();
    let prep = data.prepare().unwrap();
    assert_eq!((prep.train.m(), prep.train.l()), (5400, 5151));
    assert_eq!(data.k_test(), 600);
    let clean = predict(&expand_quadratic(&data.x_train).unwrap(), data.truth.as_ref().unwrap()).unwrap();
    let z: Vec<f64> = data.y_train.iter().zip(clean.iter()).map(|(a, b)| a - b).collect();
    let var = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
    assert!((var / 0.004 - 1.0).abs() < 0.1, "noise variance {var}");
}

#[test]
fn train_and_test_rows_partition_the_draw() {
    let spec = BayesModelSpec::new(4, 30, 15);
    let data = gen_bayes_dataset(&spec, 7).unwrap();
    let all = gen_features(37, 4, 15).unwrap();
    assert_eq!(data.x_test.data(), &all.data().slice(ndarray::s![..7, ..]));
    assert_eq!(data.x_train.data(), &all.data().slice(ndarray::s![7.., ..]));
}

#[test]
fn sinusoid_without_projections_is_constant() {
    let mut spec = SinusoidSpec::new(5, 50, 16);
    spec.rho_prior = BgPrior { p: 0.0, tau: 1.0 };
    spec.noise_var = 1e-300;
    let data = gen_sinusoid_dataset(&spec, 10).unwrap();
    let first = data.y_train[0];
    assert!(data.y_train.iter().chain(&data.y_test).all(|&v| (v - first).abs() < 1e-12));
    assert!(first.abs() <= 1.0);
    assert_eq!(data, gen_sinusoid_dataset(&spec, 10).unwrap());
}

#[test]
fn test_mse_matches_elementwise_loop() {
    let data = gen_bayes_dataset(&BayesModelSpec::new(5, 30, 17), 12).unwrap();
    let prep = data.prepare().unwrap();
    let mut theta = data.truth.clone().unwrap();
    theta.dc += 0.3;
    let x = prep.test_raw.data();
    let flat = theta.to_flat();
    let mut se = 0.0;
    for i in 0..x.nrows() {
        let mut p = 0.0;
        for j in 0..x.ncols() {
            p += x[[i, j]] * flat[j];
        }
        se += (data.y_test[i] - p).powi(2);
    }
    let got = test_mse(&prep.test_raw, &theta, &data.y_test).unwrap();
    assert!((got - se / 12.0).abs() <= 1e-12 * got);
    let zero = quadamp::GroupedCoefficients::zeros(5, quadamp::Scale::Original);
    let energy = data.y_test.iter().map(|v| v * v).sum::<f64>() / 12.0;
    assert!((test_mse(&prep.test_raw, &zero, &data.y_test).unwrap() - energy).abs() <= 1e-12 * energy);
}
