mod common;

use std::fs;

use common::random_dataset;
use hevfl::approx::Sigmoid;
use hevfl::dataset::{
    load_csv, make_circles, make_moons, standardize, standardize_split, train_test_split, vertical_split,
    write_csv,
};
use hevfl::training::{evaluate_training, plaintext_train_lr};
use hevfl::{Error, TrainConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn split_then_concat_is_identity(n in 1usize..40, d in 2usize..8, d_a_seed in any::<usize>(), seed in any::<u64>()) {
        let data = random_dataset(n, d, seed);
        let d_a = 1 + d_a_seed % (d - 1);
        let split = vertical_split(&data, d_a).unwrap();
        prop_assert_eq!(split.alice_x.ncols() + split.bob_x.ncols(), d);
        let back = split.concat().unwrap();
        prop_assert_eq!(&back.x, &data.x);
        prop_assert_eq!(&back.y, &data.y);
        prop_assert_eq!(&back.feature_names, &data.feature_names);
    }

    #[test]
    fn standardize_is_idempotent(n in 2usize..40, d in 1usize..6, seed in any::<u64>()) {
        let data = random_dataset(n, d, seed);
        let once = standardize(&data).unwrap();
        let twice = standardize(&once).unwrap();
        prop_assert!((&once.x - &twice.x).abs().max() <= 1e-12);
        for col in once.x.column_iter() {
            prop_assert!((col.sum() / n as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn per_party_standardization_equals_global(n in 2usize..30, seed in any::<u64>()) {
        let data = random_dataset(n, 4, seed);
        let split = vertical_split(&data, 2).unwrap();
        let local = standardize_split(&split).unwrap().concat().unwrap();
        prop_assert_eq!(local.x, standardize(&data).unwrap().x);
    }

    #[test]
    fn csv_round_trip_is_exact(n in 1usize..30, d in 1usize..6, seed in any::<u64>()) {
        let data = random_dataset(n, d, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, "label", "1").unwrap();
        prop_assert_eq!(back, data);
    }
}

#[test]
fn noiseless_circles_lie_on_their_radii() {
    let d = make_circles(500, 0.0, 0.5, 3).unwrap();
    assert_eq!(d.class_counts(), (250, 250));
    for i in 0..d.n() {
        let r = d.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        let expect = if d.y[i] < 0.0 { 1.0 } else { 0.5 };
        assert!((r - expect).abs() <= 1e-12, "row {i}: {r}");
    }
}

#[test]
fn noiseless_upper_moon_is_above_axis() {
    let d = make_moons(500, 0.0, 3).unwrap();
    assert_eq!(d.class_counts(), (250, 250));
    for i in 0..d.n() {
        if d.y[i] < 0.0 {
            assert!(d.x[(i, 1)] >= 0.0);
        }
    }
}

#[test]
fn generators_are_deterministic() {
    assert_eq!(make_circles(100, 0.05, 0.5, 11).unwrap(), make_circles(100, 0.05, 0.5, 11).unwrap());
    assert_eq!(make_moons(100, 0.05, 11).unwrap(), make_moons(100, 0.05, 11).unwrap());
    assert_ne!(make_moons(100, 0.05, 11).unwrap(), make_moons(100, 0.05, 12).unwrap());
}

#[test]
fn generators_reject_bad_parameters() {
    assert!(matches!(make_circles(501, 0.05, 0.5, 0), Err(Error::InvalidInput(_))));
    assert!(matches!(make_moons(7, 0.05, 0), Err(Error::InvalidInput(_))));
    assert!(make_circles(100, 0.05, 1.0, 0).is_err());
    assert!(make_moons(100, -0.1, 0).is_err());
}

#[test]
fn linear_model_on_circles_is_near_chance() {
    let d = make_circles(500, 0.05, 0.5, 7).unwrap();
    let cfg = TrainConfig::default();
    let model = plaintext_train_lr(&d, &cfg, &Sigmoid::Exact).unwrap();
    let acc = evaluate_training(&model, &d).unwrap();
    assert!((acc - 0.50).abs() <= 0.05, "{acc}");
}

#[test]
fn linear_model_on_moons_is_near_reference() {
    let d = make_moons(500, 0.05, 7).unwrap();
    let cfg = TrainConfig {
        learning_rate: 5.0,
        ..TrainConfig::default()
    };
    let model = plaintext_train_lr(&d, &cfg, &Sigmoid::Exact).unwrap();
    let acc = evaluate_training(&model, &d).unwrap();
    assert!((acc - 0.88).abs() <= 0.04, "{acc}");
}

#[test]
fn two_feature_split_matches_party_layout() {
    let d = make_circles(10, 0.05, 0.5, 1).unwrap();
    let s = vertical_split(&d, 1).unwrap();
    assert_eq!(s.alice_x.as_slice(), d.x.column(0).as_slice());
    assert_eq!(s.bob_x.as_slice(), d.x.column(1).as_slice());
    assert_eq!(s.bob_y, d.y);
    assert!(vertical_split(&d, 2).is_err());
    assert!(vertical_split(&d, 0).is_err());
}

#[test]
fn train_test_split_partitions_rows() {
    let d = make_moons(100, 0.05, 2).unwrap();
    let (train, test) = train_test_split(&d, 0.25, 9).unwrap();
    assert_eq!((train.n(), test.n()), (75, 25));
    let mut all: Vec<Vec<u64>> = (0..train.n())
        .map(|i| train.row(i).iter().map(|v| v.to_bits()).collect())
        .chain((0..test.n()).map(|i| test.row(i).iter().map(|v| v.to_bits()).collect()))
        .collect();
    let mut orig: Vec<Vec<u64>> = (0..d.n()).map(|i| d.row(i).iter().map(|v| v.to_bits()).collect()).collect();
    all.sort();
    orig.sort();
    assert_eq!(all, orig);
    assert!(train_test_split(&d, 0.0, 9).is_err());
}

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn csv_labels_map_to_signed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "f1,f2,outcome\n1.0,2.0,0\n3.5,-1,1\n0,0,1.0\n");
    let d = load_csv(&p, "outcome", "1").unwrap();
    assert_eq!(d.y, vec![-1.0, 1.0, 1.0]);
    assert_eq!(d.feature_names, vec!["f1", "f2"]);
    assert_eq!(d.x[(1, 1)], -1.0);
}

#[test]
fn csv_label_column_may_sit_anywhere() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "# comment\nclass,age\nyes,31\nno,40\n");
    let d = load_csv(&p, "class", "yes").unwrap();
    assert_eq!(d.y, vec![1.0, -1.0]);
    assert_eq!(d.x.column(0).as_slice(), &[31.0, 40.0]);
}

#[test]
fn csv_errors_carry_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "f1,label\n1,1\n");
    match load_csv(&p, "target", "1") {
        Err(Error::MissingColumn(c)) => assert_eq!(c, "target"),
        other => panic!("unexpected {other:?}"),
    }
    let p = write(&dir, "b.csv", "f1,f2,label\n1,2,1\n3,abc,0\n");
    match load_csv(&p, "label", "1") {
        Err(Error::Parse { row, column, .. }) => {
            assert_eq!(row, 2);
            assert_eq!(column, "f2");
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        load_csv(dir.path().join("missing.csv"), "label", "1"),
        Err(Error::Io { .. })
    ));
}

#[test]
fn medical_shaped_stand_ins_load() {
    let dir = tempfile::tempdir().unwrap();
    for (n, seed) in [(189usize, 1u64), (379, 2)] {
        let data = random_dataset(n, 10, seed);
        let path = dir.path().join(format!("stand_in_{n}.csv"));
        write_csv(&data, &path).unwrap();
        let back = load_csv(&path, "label", "1").unwrap();
        assert_eq!((back.n(), back.d()), (n, 10));
        assert!(back.y.iter().all(|&v| v == 1.0 || v == -1.0));
    }
}
