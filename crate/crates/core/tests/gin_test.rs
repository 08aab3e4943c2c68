//! Sample-level GIN and IN test contracts, plus the augmentation bridge
//! between them.

mod common;

use ginlatent_core::gin::{gin_test, gin_via_augmentation, in_test};
use ginlatent_core::stats::{DataMatrix, TestConfig};
use ginlatent_core::synth::{sample, GenConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{cols, eight_var_default};

fn eight_var_data(seed: u64, n: usize) -> DataMatrix {
    let g = eight_var_default();
    sample(
        &g,
        &GenConfig {
            seed,
            sample_size: n,
            ..GenConfig::default()
        },
    )
    .unwrap()
}

fn zy_data(seed: u64, n: usize, coef: f64) -> DataMatrix {
    // One-regressor linear instance z -> y with power-law noise.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64).powi(5)).collect();
    let y: Vec<f64> = z
        .iter()
        .map(|v| coef * v + rng.random_range(-1.0..1.0f64).powi(5))
        .collect();
    DataMatrix::from_columns(vec![("z".into(), z), ("y".into(), y)]).unwrap()
}

#[test]
fn satisfied_on_the_annihilable_triple() {
    let data = eight_var_data(2026, 2000);
    let z = cols(&data, &["X4", "X5"]);
    let y = cols(&data, &["X1", "X2", "X3"]);
    let r = gin_test(&data, &z, &y, &TestConfig::default()).unwrap();
    assert!(
        r.satisfied,
        "two-latent block is annihilable: combined p = {}",
        r.combined_p
    );
    assert_eq!(r.pairwise_p.len(), 2);
    assert_eq!(r.pairwise_p[0].0, "X4");
    assert_eq!(r.pairwise_p[1].0, "X5");
}

#[test]
fn violated_when_projection_keeps_shared_noise() {
    let data = eight_var_data(2026, 2000);
    let z = cols(&data, &["X3", "X6"]);
    let y = cols(&data, &["X1", "X2", "X5"]);
    let r = gin_test(&data, &z, &y, &TestConfig::default()).unwrap();
    assert!(
        !r.satisfied,
        "projection retains the shared upstream noise: combined p = {}",
        r.combined_p
    );
}

#[test]
fn satisfied_for_fully_independent_columns() {
    // A single draw can land in the test's alpha-sized rejection region by
    // chance, so assert the verdict over a seed panel instead of one seed.
    let n = 1000;
    let mut satisfied = 0;
    for seed in 5..15u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut col = |_: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-1.0..1.0f64).powi(5)).collect()
        };
        let data = DataMatrix::from_columns(vec![
            ("y1".into(), col(0)),
            ("y2".into(), col(1)),
            ("z1".into(), col(2)),
        ])
        .unwrap();
        let r = gin_test(&data, &[2], &[0, 1], &TestConfig::default()).unwrap();
        if r.satisfied {
            satisfied += 1;
        }
    }
    assert!(
        satisfied >= 8,
        "independent noise should satisfy the condition on most seeds, got {satisfied}/10"
    );
}

#[test]
fn verdict_is_threshold_consistent() {
    let data = eight_var_data(7, 1000);
    let z = cols(&data, &["X4", "X5"]);
    let y = cols(&data, &["X1", "X2", "X3"]);
    let r = gin_test(&data, &z, &y, &TestConfig::default()).unwrap();
    assert_eq!(r.satisfied, r.combined_p >= r.config_used.alpha);
}

#[test]
fn rejects_overlapping_sets_and_scalar_y() {
    let data = eight_var_data(7, 400);
    assert!(gin_test(&data, &[0, 1], &[1, 2], &TestConfig::default()).is_err());
    assert!(gin_test(&data, &[0], &[1], &TestConfig::default()).is_err());
    assert!(gin_test(&data, &[], &[0, 1], &TestConfig::default()).is_err());
}

#[test]
fn column_order_within_sets_does_not_change_the_verdict() {
    let data = eight_var_data(99, 1000);
    let z1 = cols(&data, &["X4", "X5"]);
    let z2 = cols(&data, &["X5", "X4"]);
    let y1 = cols(&data, &["X1", "X2", "X3"]);
    let y2 = cols(&data, &["X3", "X1", "X2"]);
    let a = gin_test(&data, &z1, &y1, &TestConfig::default()).unwrap();
    let b = gin_test(&data, &z2, &y2, &TestConfig::default()).unwrap();
    assert_eq!(a.satisfied, b.satisfied);
    assert!((a.combined_p - b.combined_p).abs() < 1e-6);
}

#[test]
fn in_test_accepts_true_regression_direction() {
    let data = zy_data(31, 3000, 1.3);
    let r = in_test(&data, &[0], 1, &TestConfig::default()).unwrap();
    assert!(r.satisfied, "residual of y on z is independent of z: p = {}", r.combined_p);
}

#[test]
fn in_test_rejects_reversed_direction() {
    let data = zy_data(31, 3000, 1.3);
    let r = in_test(&data, &[1], 0, &TestConfig::default()).unwrap();
    assert!(
        !r.satisfied,
        "regressing cause on effect leaves dependence: p = {}",
        r.combined_p
    );
}

#[test]
fn in_test_flags_exact_functional_relation_as_degenerate() {
    let z: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
    let y = z.clone();
    let data = DataMatrix::from_columns(vec![("z".into(), z), ("y".into(), y)]).unwrap();
    let r = in_test(&data, &[0], 1, &TestConfig::default()).unwrap();
    assert!(r.satisfied);
    assert!(r.degenerate, "zero residual is a vacuous independence");
}

#[test]
fn augmentation_satisfied_whenever_in_holds() {
    let data = zy_data(47, 3000, 0.8);
    let in_r = in_test(&data, &[0], 1, &TestConfig::default()).unwrap();
    let gin_r = gin_via_augmentation(&data, &[0], 1, &TestConfig::default()).unwrap();
    assert!(in_r.satisfied);
    assert!(gin_r.satisfied);
}

#[test]
fn augmentation_omega_matches_regression_coefficients() {
    // On data from z -> y with coefficient 1.3, the augmented annihilator is
    // proportional to (1, -1.3): the regression vector in disguise.
    let data = zy_data(53, 12_000, 1.3);
    let r = gin_via_augmentation(&data, &[0], 1, &TestConfig::default()).unwrap();
    let om = &r.omega.omega;
    assert_eq!(om.len(), 2);
    let ratio = om[1] / om[0];
    assert!(
        (ratio + 1.3).abs() < 0.05,
        "expected ratio near -1.3, got {ratio} (omega {om:?})"
    );
}

#[test]
fn augmentation_and_plain_test_agree_on_independent_columns() {
    // The plain test is calibrated near alpha, while the augmented route tests a
    // regression residual and inherits the plug-in estimator's liberal rejection
    // rate (roughly 10% here, largely independent of sample size).  Verdict
    // agreement between the routes is therefore high but bounded away from 1;
    // assert each route's acceptance rate and the induced agreement bound.
    let mut agree = 0;
    let mut plain_ok = 0;
    let mut aug_ok = 0;
    let trials = 100;
    for t in 0..trials {
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + t);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64).powi(5)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64).powi(5)).collect();
        let y2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0f64).powi(5)).collect();
        let data = DataMatrix::from_columns(vec![
            ("z".into(), z),
            ("y".into(), y),
            ("y2".into(), y2),
        ])
        .unwrap();
        let plain = gin_test(&data, &[0], &[1, 2], &TestConfig::default()).unwrap();
        let aug = gin_via_augmentation(&data, &[0], 1, &TestConfig::default()).unwrap();
        if plain.satisfied == aug.satisfied {
            agree += 1;
        }
        if plain.satisfied {
            plain_ok += 1;
        }
        if aug.satisfied {
            aug_ok += 1;
        }
    }
    assert!(
        plain_ok >= 92,
        "plain route should accept independent columns near 1-alpha, got {plain_ok}/{trials}"
    );
    assert!(
        aug_ok >= 80,
        "augmented route should accept the large majority, got {aug_ok}/{trials}"
    );
    assert!(
        agree >= 85,
        "augmented and plain verdicts agree on {agree}/{trials} trials"
    );
}
