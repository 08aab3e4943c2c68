//! Shared fixtures for integration tests.
//!
//! The central fixture is an eight-indicator structure with four latent
//! variables: two latents jointly load on the first four indicators, and two
//! further latents each drive a pure pair. It exercises every code path:
//! multi-latent clusters, latent-latent edges, and pure single-latent pairs.
#![allow(dead_code)]

use nalgebra::DMatrix;

use ginlatent_core::graph::LingLamGraph;
use ginlatent_core::synth::NoiseSpec;

/// Coefficients for the eight-indicator fixture.
///
/// Latent wiring: `L1 -> L2` (alpha), `L1 -> L3` (beta), `L1 -> L4` (gamma),
/// `L2 -> L3` (sigma), `L2 -> L4` (eta), `L3 -> L4` (theta).
/// Loadings: `L1 -> X1..X4` with `a`, `L2 -> X1..X4` with `b`,
/// `L3 -> {X5, X6}` with `c`, `L4 -> {X7, X8}` with `d`.
#[derive(Clone, Debug)]
pub struct EightVarCoefs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub eta: f64,
    pub theta: f64,
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [f64; 2],
    pub d: [f64; 2],
}

impl Default for EightVarCoefs {
    fn default() -> Self {
        EightVarCoefs {
            alpha: 0.8,
            beta: 0.7,
            gamma: 0.9,
            sigma: 0.6,
            eta: 1.1,
            theta: 0.75,
            a: [1.0, 2.0, 3.0, 0.9],
            b: [1.0, 1.0, 2.0, 1.3],
            c: [1.2, 0.7],
            d: [0.8, 1.4],
        }
    }
}

/// Build the eight-indicator, four-latent fixture with explicit coefficients.
///
/// Variable indexing: latents `L1..L4` occupy global indices 0..4, observed
/// `X1..X8` occupy 4..12.
pub fn eight_var_graph(k: &EightVarCoefs) -> LingLamGraph {
    let total = 12;
    let mut coef = DMatrix::<f64>::zeros(total, total);
    // Latent-latent edges.
    coef[(1, 0)] = k.alpha;
    coef[(2, 0)] = k.beta;
    coef[(2, 1)] = k.sigma;
    coef[(3, 0)] = k.gamma;
    coef[(3, 1)] = k.eta;
    coef[(3, 2)] = k.theta;
    // X1..X4 load on L1 and L2.
    for i in 0..4 {
        coef[(4 + i, 0)] = k.a[i];
        coef[(4 + i, 1)] = k.b[i];
    }
    // X5, X6 load on L3.
    coef[(8, 2)] = k.c[0];
    coef[(9, 2)] = k.c[1];
    // X7, X8 load on L4.
    coef[(10, 3)] = k.d[0];
    coef[(11, 3)] = k.d[1];

    LingLamGraph::new(
        vec!["L1".into(), "L2".into(), "L3".into(), "L4".into()],
        (1..=8).map(|i| format!("X{i}")).collect(),
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .expect("fixture graph is structurally well-formed")
}

pub fn eight_var_default() -> LingLamGraph {
    eight_var_graph(&EightVarCoefs::default())
}

/// Two latents, `L1 -> L2`, with `L1 -> {X1, X2}` and `L2 -> {X3, X4}`.
pub fn two_cluster_chain(alpha: f64, a: [f64; 2], b: [f64; 2]) -> LingLamGraph {
    let total = 6;
    let mut coef = DMatrix::<f64>::zeros(total, total);
    coef[(1, 0)] = alpha;
    coef[(2, 0)] = a[0];
    coef[(3, 0)] = a[1];
    coef[(4, 1)] = b[0];
    coef[(5, 1)] = b[1];
    LingLamGraph::new(
        vec!["L1".into(), "L2".into()],
        (1..=4).map(|i| format!("X{i}")).collect(),
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .expect("fixture graph is structurally well-formed")
}

/// Same structure as `two_cluster_chain` but with X2 removed, so L1 keeps a
/// single pure child. Used to exercise the double-pure-child validation.
pub fn chain_with_single_child() -> LingLamGraph {
    let total = 5;
    let mut coef = DMatrix::<f64>::zeros(total, total);
    coef[(1, 0)] = 0.8;
    coef[(2, 0)] = 1.0; // L1 -> X1
    coef[(3, 1)] = 1.2; // L2 -> X3
    coef[(4, 1)] = 0.9; // L2 -> X4
    LingLamGraph::new(
        vec!["L1".into(), "L2".into()],
        vec!["X1".into(), "X3".into(), "X4".into()],
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .expect("fixture graph is structurally well-formed")
}

/// Single latent with `n_children` pure indicators, unit loadings.
pub fn single_latent(n_children: usize) -> LingLamGraph {
    let total = 1 + n_children;
    let mut coef = DMatrix::<f64>::zeros(total, total);
    for i in 0..n_children {
        coef[(1 + i, 0)] = 1.0 + 0.1 * i as f64;
    }
    LingLamGraph::new(
        vec!["L1".into()],
        (1..=n_children).map(|i| format!("X{i}")).collect(),
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
    .expect("fixture graph is structurally well-formed")
}

/// Map observed-variable names to column indices of a data matrix.
pub fn cols(data: &ginlatent_core::stats::DataMatrix, names: &[&str]) -> Vec<usize> {
    names
        .iter()
        .map(|n| data.col_index(n).expect("column exists"))
        .collect()
}

/// Map variable names to global graph indices.
pub fn vars(graph: &LingLamGraph, names: &[&str]) -> Vec<usize> {
    names
        .iter()
        .map(|n| graph.var_index(n).expect("variable exists"))
        .collect()
}
