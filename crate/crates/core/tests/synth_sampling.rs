//! Generator contract: canonical case structures, random graphs, sampling,
//! and the noise-law moments.

mod common;

use approx::assert_relative_eq;
use ginlatent_core::graph::VarKind;
use ginlatent_core::oracle::population_covariance;
use ginlatent_core::synth::{case_graph, draw_noise, random_graph, sample, GenConfig, NoiseSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::cols;

fn cfg(seed: u64, n: usize) -> GenConfig {
    GenConfig {
        seed,
        sample_size: n,
        ..GenConfig::default()
    }
}

#[test]
fn case_4_matches_the_eight_var_structure() {
    let g = case_graph(4, &cfg(7, 100)).unwrap();
    assert_eq!(g.n_latents(), 4);
    assert_eq!(g.n_observed(), 8);
    assert!(g.validate_model().is_empty());
    // Latent wiring: L1->L2, L1->L3, L2->L3, L1->L4, L2->L4, L3->L4.
    for (to, from) in [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)] {
        assert!(g.coefficient(to, from).abs() >= 0.5, "latent edge {from}->{to}");
    }
    // X1..X4 load on both L1 and L2; X5,X6 on L3; X7,X8 on L4.
    for x in 4..8 {
        assert!(g.coefficient(x, 0).abs() >= 0.5);
        assert!(g.coefficient(x, 1).abs() >= 0.5);
        assert_eq!(g.coefficient(x, 2), 0.0);
        assert_eq!(g.coefficient(x, 3), 0.0);
    }
    for x in [8, 9] {
        assert!(g.coefficient(x, 2).abs() >= 0.5);
        assert_eq!(g.coefficient(x, 0), 0.0);
    }
    for x in [10, 11] {
        assert!(g.coefficient(x, 3).abs() >= 0.5);
        assert_eq!(g.coefficient(x, 2), 0.0);
    }
}

#[test]
fn case_1_has_two_latents_four_observed_five_edges() {
    let g = case_graph(1, &cfg(3, 100)).unwrap();
    assert_eq!(g.n_latents(), 2);
    assert_eq!(g.n_observed(), 4);
    let edges = g
        .coefficients()
        .iter()
        .filter(|&&c| c != 0.0)
        .count();
    assert_eq!(edges, 5);
    assert!(g.validate_model().is_empty());
}

#[test]
fn case_2_extends_case_1_with_shared_pair() {
    let g = case_graph(2, &cfg(3, 100)).unwrap();
    assert_eq!(g.n_latents(), 2);
    assert_eq!(g.n_observed(), 6);
    assert!(g.validate_model().is_empty());
    let clusters = g.true_clusters().unwrap();
    assert_eq!(clusters.len(), 2);
    let mut dims: Vec<usize> = clusters.iter().map(|c| c.latent_dim).collect();
    dims.sort();
    assert_eq!(dims, vec![1, 2]);
    let sizes: Vec<usize> = {
        let mut s: Vec<usize> = clusters.iter().map(|c| c.members.len()).collect();
        s.sort();
        s
    };
    assert_eq!(sizes, vec![2, 4]);
}

#[test]
fn case_3_is_a_three_latent_triangle_with_pure_triples() {
    let g = case_graph(3, &cfg(11, 100)).unwrap();
    assert_eq!(g.n_latents(), 3);
    assert_eq!(g.n_observed(), 9);
    assert!(g.validate_model().is_empty());
    for (to, from) in [(1, 0), (2, 0), (2, 1)] {
        assert!(g.coefficient(to, from).abs() >= 0.5);
    }
    let clusters = g.true_clusters().unwrap();
    assert_eq!(clusters.len(), 3);
    assert!(clusters.iter().all(|c| c.latent_dim == 1 && c.members.len() == 3));
}

#[test]
fn invalid_case_id_is_rejected() {
    assert!(case_graph(0, &cfg(1, 10)).is_err());
    assert!(case_graph(5, &cfg(1, 10)).is_err());
}

#[test]
fn same_seed_reproduces_identical_graphs() {
    let a = case_graph(4, &cfg(42, 100)).unwrap();
    let b = case_graph(4, &cfg(42, 100)).unwrap();
    assert_eq!(a.coefficients(), b.coefficients());
    let c = case_graph(4, &cfg(43, 100)).unwrap();
    assert_ne!(a.coefficients(), c.coefficients());
}

#[test]
fn random_graph_shapes() {
    let g = random_graph(5, 3, &cfg(1, 100)).unwrap();
    assert_eq!(g.n_latents(), 5);
    assert_eq!(g.n_observed(), 15);
    assert!(g.validate_model().is_empty());

    let g = random_graph(1, 2, &cfg(1, 100)).unwrap();
    assert_eq!(g.n_latents(), 1);
    assert_eq!(g.n_observed(), 2);
    assert!(g.validate_model().is_empty());

    let g = random_graph(20, 3, &cfg(1, 100)).unwrap();
    assert_eq!(g.n_total(), 80);
    assert_eq!(g.n_observed(), 60);
    assert!(g.validate_model().is_empty());
}

#[test]
fn random_graph_latents_are_connected_to_an_earlier_latent() {
    for seed in 0..20 {
        let g = random_graph(5, 3, &cfg(seed, 10)).unwrap();
        for j in 1..5 {
            let has_parent = (0..j).any(|i| g.coefficient(j, i) != 0.0);
            assert!(has_parent, "latent {j} must keep at least one latent parent");
        }
    }
}

#[test]
fn drawn_coefficients_stay_in_band() {
    for seed in 0..10 {
        let g = random_graph(4, 3, &cfg(seed, 10)).unwrap();
        for &c in g.coefficients().iter() {
            if c != 0.0 {
                assert!((0.5..=2.0).contains(&c.abs()), "coefficient {c} out of band");
            }
        }
    }
}

#[test]
fn sample_shape_and_centering() {
    let g = case_graph(4, &cfg(9, 1000)).unwrap();
    let data = sample(&g, &cfg(9, 1000)).unwrap();
    assert_eq!(data.n_rows(), 1000);
    assert_eq!(data.n_cols(), 8);
    assert_eq!(data.names()[0], "X1");
    // Columns are centered exactly (up to accumulation error).
    for j in 0..data.n_cols() {
        let col = data.values().column(j);
        let mean = col.sum() / 1000.0;
        assert!(mean.abs() < 1e-10, "column {j} mean {mean}");
    }
}

#[test]
fn sample_is_deterministic_per_seed() {
    let g = case_graph(2, &cfg(5, 400)).unwrap();
    let a = sample(&g, &cfg(5, 400)).unwrap();
    let b = sample(&g, &cfg(5, 400)).unwrap();
    assert_eq!(a.values(), b.values());
    let c = sample(&g, &cfg(6, 400)).unwrap();
    assert_ne!(a.values(), c.values());
}

#[test]
fn zero_coefficient_graph_gives_uncorrelated_columns() {
    use ginlatent_core::graph::LingLamGraph;
    use nalgebra::DMatrix;
    let total = 4;
    let g = LingLamGraph::new(
        vec![],
        (1..=4).map(|i| format!("X{i}")).collect(),
        DMatrix::zeros(total, total),
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .unwrap();
    let n = 20_000;
    let data = sample(&g, &cfg(13, n)).unwrap();
    let y: Vec<usize> = (0..4).collect();
    let cov = ginlatent_core::stats::cross_covariance(&data, &y, &y).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let r = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
                assert!(r.abs() < 0.05, "corr({i},{j}) = {r}");
            }
        }
    }
}

#[test]
fn sample_covariance_agrees_with_population_formula() {
    // Monte-Carlo cross-check of the closed-form second moments.
    let g = case_graph(1, &cfg(21, 100_000)).unwrap();
    let n = 100_000usize;
    let data = sample(&g, &cfg(21, n)).unwrap();
    let idx = cols(&data, &["X1", "X2", "X3", "X4"]);
    let emp = ginlatent_core::stats::cross_covariance(&data, &idx, &idx).unwrap();
    let pop = population_covariance(&g).unwrap();
    let obs = pop.observed_block(&g);
    for i in 0..4 {
        for j in 0..4 {
            let sii = obs[(i, i)];
            let sjj = obs[(j, j)];
            let sij = obs[(i, j)];
            // Gaussian-approximation standard error of a sample covariance;
            // heavy tails of the power-law noise keep actual spread in the
            // same order of magnitude, covered by the 5x factor.
            let se = ((sii * sjj + sij * sij) / n as f64).sqrt();
            assert!(
                (emp[(i, j)] - sij).abs() < 5.0 * se,
                "cov({i},{j}): empirical {} vs population {} (se {se})",
                emp[(i, j)],
                sij
            );
        }
    }
}

#[test]
fn power_noise_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let spec = NoiseSpec::UniformPower { exponent: 5 };
    let n = 200_000;
    let draws = draw_noise(&spec, n, &mut rng);
    assert!(draws.iter().all(|v| v.abs() <= 1.0), "fifth powers stay in [-1,1]");

    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    // Population variance of u^5 with u ~ U[-1,1] is 1/11.
    assert_relative_eq!(var, 1.0 / 11.0, epsilon = 3e-3);

    let m4 = draws.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n as f64;
    let excess = m4 / (var * var) - 3.0;
    // Exact value: (2p+1)^2/(4p+1) - 3 = 121/21 - 3 = 58/21.
    assert_relative_eq!(excess, 58.0 / 21.0, epsilon = 0.2);
    assert!(excess > 2.0, "the law is strongly leptokurtic");

    // The spec's own moment accessors report the exact values.
    assert_relative_eq!(spec.variance(), 1.0 / 11.0, epsilon = 1e-12);
    assert_relative_eq!(spec.excess_kurtosis(), 58.0 / 21.0, epsilon = 1e-12);
}

#[test]
fn uniform_noise_is_centered() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = NoiseSpec::Uniform { low: 0.0, high: 2.0 };
    let draws = draw_noise(&spec, 50_000, &mut rng);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!(mean.abs() < 0.02, "draws are centered, got mean {mean}");
    assert!(draws.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    assert_relative_eq!(spec.variance(), 1.0 / 3.0, epsilon = 1e-12);
}

#[test]
fn generated_graphs_keep_latents_before_observed() {
    let g = random_graph(3, 2, &cfg(8, 10)).unwrap();
    for i in 0..g.n_latents() {
        assert_eq!(g.variable(i).kind, VarKind::Latent);
    }
    for i in g.n_latents()..g.n_total() {
        assert_eq!(g.variable(i).kind, VarKind::Observed);
    }
}

#[test]
fn rescaled_noise_yields_unit_variance_columns() {
    use ginlatent_core::graph::LingLamGraph;
    use nalgebra::DMatrix;
    let total = 2;
    let g = LingLamGraph::new(
        vec![],
        vec!["X1".into(), "X2".into()],
        DMatrix::zeros(total, total),
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .unwrap();
    let config = GenConfig {
        seed: 4,
        sample_size: 50_000,
        rescale_noise: true,
        ..GenConfig::default()
    };
    let data = sample(&g, &config).unwrap();
    for j in 0..2 {
        let col = data.values().column(j);
        let var = col.iter().map(|v| v * v).sum::<f64>() / (col.len() as f64 - 1.0);
        assert_relative_eq!(var, 1.0, epsilon = 0.05);
    }
}
