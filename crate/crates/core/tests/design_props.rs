use ndarray::Array2;
use proptest::prelude::*;
use quadamp::design::{
    column_count, column_groups, predict, rescale_coefficients_to_normalized, rescale_coefficients_to_original,
};
use quadamp::{expand_quadratic, normalize_columns, FeatureMatrix, GroupedCoefficients, Scale};

fn features(m: usize, n: usize, values: &[f64]) -> FeatureMatrix {
    FeatureMatrix::new(Array2::from_shape_vec((m, n), values[..m * n].to_vec()).unwrap()).unwrap()
}

/// Direct evaluation of the quadratic model on one row.
fn quadratic_model(x: &[f64], theta: &GroupedCoefficients) -> f64 {
    let n = x.len();
    let mut v = theta.dc;
    for a in 0..n {
        v += theta.linear[a] * x[a] + theta.quadratic[a] * x[a] * x[a];
    }
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            v += theta.cross[k] * x[a] * x[b];
            k += 1;
        }
    }
    v
}

fn dims() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..12, 1usize..7).prop_flat_map(|(m, n)| {
        let l = column_count(n).unwrap();
        (
            Just(m),
            Just(n),
            prop::collection::vec(-3.0f64..3.0, m * n),
            prop::collection::vec(-2.0f64..2.0, l),
        )
    })
}

#[test]
fn reference_column_counts() {
    assert_eq!(column_count(10).unwrap(), 66);
    assert_eq!(column_count(100).unwrap(), 5151);
    assert_eq!(column_count(1).unwrap(), 3);
    assert!(column_count(0).is_err());
}

#[test]
fn group_map_length_matches_column_count_up_to_200_features() {
    for n in 1..=200 {
        let groups = column_groups(n).unwrap();
        assert_eq!(groups.len(), column_count(n).unwrap());
    }
    let x = FeatureMatrix::new(Array2::from_elem((4, 17), 0.5)).unwrap();
    assert_eq!(expand_quadratic(&x).unwrap().groups().len(), column_count(17).unwrap());
}

#[test]
fn normalized_columns_and_rescaling_examples() {
    let x = FeatureMatrix::new(Array2::from_shape_fn((100, 3), |(i, j)| (i as f64 * 0.37 + j as f64).sin() + 0.1)).unwrap();
    let d = normalize_columns(&expand_quadratic(&x).unwrap()).unwrap();
    assert!(d.column(0).iter().all(|&v| (v - 0.1).abs() < 1e-15));
    let l = d.l();
    let unit = vec![1.0; l];
    let theta = GroupedCoefficients::from_flat(3, &vec![0.5; l], Scale::Original).unwrap();
    let same = rescale_coefficients_to_normalized(&theta, &unit).unwrap();
    assert_eq!(same.to_flat(), theta.to_flat());
    let fours = vec![4.0; l];
    assert!(rescale_coefficients_to_normalized(&theta, &fours).unwrap().to_flat().iter().all(|&v| v == 2.0));
}

proptest! {
    #[test]
    fn predict_matches_direct_evaluation((m, n, xs, th) in dims()) {
        let x = features(m, n, &xs);
        let design = expand_quadratic(&x).unwrap();
        prop_assert_eq!(design.l(), column_count(n).unwrap());
        let theta = GroupedCoefficients::from_flat(n, &th, Scale::Original).unwrap();
        let pred = predict(&design, &theta).unwrap();
        for i in 0..m {
            let row: Vec<f64> = (0..n).map(|j| xs[i * n + j]).collect();
            let want = quadratic_model(&row, &theta);
            prop_assert!((pred[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn square_columns_are_nonnegative((m, n, xs, _th) in dims()) {
        let design = expand_quadratic(&features(m, n, &xs)).unwrap();
        for j in 1 + n..1 + 2 * n {
            prop_assert!(design.column(j).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn normalized_design_has_unit_columns_and_frobenius_l(
        (m, n, xs, _th) in (4usize..15, 1usize..6).prop_flat_map(|(m, n)| {
            (Just(m), Just(n), prop::collection::vec(0.1f64..3.0, m * n), Just(()))
        })
    ) {
        let design = normalize_columns(&expand_quadratic(&features(m, n, &xs)).unwrap()).unwrap();
        let mut frob = 0.0;
        for j in 0..design.l() {
            let sq: f64 = design.column(j).iter().map(|v| v * v).sum();
            prop_assert!((sq.sqrt() - 1.0).abs() <= 1e-12);
            frob += sq;
        }
        prop_assert!((frob - design.l() as f64).abs() <= 1e-9 * design.l() as f64);
    }

    #[test]
    fn rescaling_round_trips(
        th in prop::collection::vec(-5.0f64..5.0, 21),
        norms in prop::collection::vec(1e-3f64..1e3, 21),
    ) {
        let theta = GroupedCoefficients::from_flat(5, &th, Scale::Original).unwrap();
        let there = rescale_coefficients_to_normalized(&theta, &norms).unwrap();
        prop_assert_eq!(there.scale, Scale::Normalized);
        let back = rescale_coefficients_to_original(&there, &norms).unwrap();
        for (a, b) in back.to_flat().iter().zip(&th) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }
}
