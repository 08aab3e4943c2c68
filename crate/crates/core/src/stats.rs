//! Numerical primitives: data container, cross-covariance, annihilator
//! extraction, HSIC independence testing, Fisher combination, and OLS
//! residuals.
//!
//! Everything here is deterministic: reductions run in a fixed order, so
//! results are bit-identical across runs and thread counts.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io;
use std::rc::Rc;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Gamma};

use crate::error::{Error, Result};
use crate::synth::mix_seed;

/// Kernel bandwidth selection for the HSIC test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelWidth {
    /// Per-argument bandwidth: `sigma^2` is half the median of the positive
    /// squared pairwise distances of that argument.
    MedianHeuristic,
    /// Fixed bandwidth `sigma` used for both arguments.
    Fixed(f64),
}

/// How HSIC p-values are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PvalueMethod {
    /// Two-moment gamma approximation of the null distribution.
    GammaApprox,
    /// Permutation test with the given number of resamples.
    Permutation(usize),
}

/// Shared setting block for all statistical tests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    /// Significance level used by the independence-based decisions.
    pub alpha: f64,
    /// HSIC kernel bandwidth rule.
    pub kernel_width: KernelWidth,
    /// HSIC p-value computation method.
    pub hsic_pvalue_method: PvalueMethod,
    /// Relative singular-value cutoff for rank decisions.
    pub svd_tolerance: f64,
    /// Seed for any resampling performed by the tests themselves.
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            kernel_width: KernelWidth::MedianHeuristic,
            hsic_pvalue_method: PvalueMethod::GammaApprox,
            svd_tolerance: 1e-8,
            seed: 0,
        }
    }
}

/// Column-named numeric matrix holding one observation per row.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
    index: BTreeMap<String, usize>,
}

impl DataMatrix {
    /// Build from named columns. All columns must share one length of at
    /// least two, hold only finite values, and carry distinct names.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Data("no columns supplied".into()));
        }
        let n = columns[0].1.len();
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut index = BTreeMap::new();
        for (j, (name, col)) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "column {name:?} has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "column {name:?} holds a non-finite value at row {i}"
                )));
            }
            if index.insert(name.clone(), j).is_some() {
                return Err(Error::Data(format!("duplicate column name {name:?}")));
            }
            names.push(name.clone());
        }
        let values = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);
        Ok(DataMatrix {
            names,
            values,
            index,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Column position of a name.
    pub fn col_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Reference(format!("no column named {name:?}")))
    }

    /// A copy of column `j`.
    pub fn col(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.n_cols() {
            return Err(Error::Reference(format!(
                "column index {j} outside 0..{}",
                self.n_cols()
            )));
        }
        Ok(self.values.column(j).iter().copied().collect())
    }

    /// Borrow column `j` as a contiguous slice. Panics when out of range;
    /// use [`DataMatrix::col`] for the checked copy.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.values.nrows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// Write RFC-4180 CSV with a header row. Values use Rust's shortest
    /// round-trip decimal form, so `parse::<f64>` recovers them bit-exactly.
    pub fn write_csv<W: io::Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows() {
            line.clear();
            for j in 0..self.n_cols() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{}", self.values[(i, j)]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Sample cross-covariance (1/(N-1) normalization) between two column sets:
/// entry `(i, j)` covaries `rows[i]` with `cols[j]`.
pub fn cross_covariance(
    data: &DataMatrix,
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::Argument(
            "cross-covariance needs nonempty index sets".into(),
        ));
    }
    for &j in rows.iter().chain(cols) {
        if j >= data.n_cols() {
            return Err(Error::Reference(format!(
                "column index {j} outside 0..{}",
                data.n_cols()
            )));
        }
    }
    let n = data.n_rows();
    let centered = |j: usize| -> Vec<f64> {
        let col = data.values().column(j);
        let mean = col.sum() / n as f64;
        col.iter().map(|v| v - mean).collect()
    };
    let a: Vec<Vec<f64>> = rows.iter().map(|&j| centered(j)).collect();
    let b: Vec<Vec<f64>> = cols.iter().map(|&j| centered(j)).collect();
    let denom = (n - 1) as f64;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        a[i].iter().zip(&b[j]).map(|(x, y)| x * y).sum::<f64>() / denom
    }))
}

/// Left annihilator of a cross-covariance block.
#[derive(Clone, Debug)]
pub struct OmegaSolution {
    /// Unit-norm direction minimizing `|| omega' Sigma ||`, sign-canonical
    /// (first component above 1e-12 in magnitude is positive).
    pub omega: Vec<f64>,
    /// The achieved `|| omega' Sigma ||`.
    pub residual_singular_value: f64,
    /// Dimension of the left null space at the configured tolerance.
    pub null_dim: usize,
    /// Set when the whole block is indistinguishable from zero at the
    /// configured tolerance; `omega` is then the first basis vector.
    pub degenerate: bool,
}

fn canonicalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    v
}

/// Extract the annihilator from an explicit cross-covariance block.
///
/// `scale` anchors the degeneracy decision: the block counts as zero when its
/// largest singular value is at most `config.svd_tolerance * scale`. Callers
/// working from data pass a product of column scales; population callers pass
/// 1.
pub fn estimate_omega_from_cov(
    sigma: &DMatrix<f64>,
    config: &TestConfig,
    scale: f64,
) -> Result<OmegaSolution> {
    let ny = sigma.nrows();
    let nz = sigma.ncols();
    if ny == 0 || nz == 0 {
        return Err(Error::Argument("empty cross-covariance block".into()));
    }

    // Eigen directions of Sigma Sigma' are the left singular directions of
    // Sigma. Rank decisions use the annihilation error each direction
    // actually achieves, ||v' Sigma||, rather than the square root of the
    // eigenvalue: Gram eigenvalues carry O(eps * lambda_max) noise, which
    // would lift exact null directions right up to the tolerance cutoff.
    let gram = sigma * sigma.transpose();
    let eig = gram.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..ny)
        .map(|k| {
            let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let mut achieved = 0.0f64;
            for c in 0..nz {
                let mut dot = 0.0;
                for (r, w) in v.iter().enumerate() {
                    dot += w * sigma[(r, c)];
                }
                achieved += dot * dot;
            }
            (achieved.sqrt(), v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite singular values"));

    let sigma_max = pairs.last().expect("ny >= 1").0;
    let tol = config.svd_tolerance;

    if sigma_max <= tol * scale {
        // The whole block is numerically zero: every direction annihilates.
        let mut omega = vec![0.0; ny];
        omega[0] = 1.0;
        return Ok(OmegaSolution {
            omega,
            residual_singular_value: sigma_max,
            null_dim: ny,
            degenerate: true,
        });
    }

    if ny == 1 {
        return Err(Error::Numerical(
            "annihilator undefined: a single response with nonzero cross-covariance".into(),
        ));
    }

    let rank = pairs
        .iter()
        .filter(|(achieved, _)| *achieved > tol * sigma_max)
        .count();
    let null_dim = ny - rank;

    let omega = canonicalize(pairs[0].1.clone());
    let om = DMatrix::from_row_slice(1, ny, &omega);
    let residual = (&om * sigma).norm();

    Ok(OmegaSolution {
        omega,
        residual_singular_value: residual,
        null_dim,
        degenerate: false,
    })
}

/// Extract the annihilator of `cov(Y, Z)` from data columns.
pub fn estimate_omega(
    data: &DataMatrix,
    y_cols: &[usize],
    z_cols: &[usize],
    config: &TestConfig,
) -> Result<OmegaSolution> {
    let sigma = cross_covariance(data, y_cols, z_cols)?;
    let sd = |j: usize| -> f64 {
        let col = data.values().column(j);
        let mean = col.sum() / data.n_rows() as f64;
        (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (data.n_rows() - 1) as f64).sqrt()
    };
    let sy = y_cols.iter().map(|&j| sd(j)).fold(0.0f64, f64::max);
    let sz = z_cols.iter().map(|&j| sd(j)).fold(0.0f64, f64::max);
    let scale = (sy * sz).max(f64::MIN_POSITIVE);
    estimate_omega_from_cov(&sigma, config, scale)
}

/// Outcome of one HSIC independence test.
#[derive(Clone, Debug)]
pub struct HsicResult {
    /// Probability of a statistic at least this large under independence.
    pub p_value: f64,
    /// The test statistic `n * HSIC_b`.
    pub statistic: f64,
    /// Set when an argument is constant, making independence vacuous.
    pub degenerate: bool,
}

/// Full-precision Gram cache limit: below this row count kernels are stored
/// as f64.
const GRAM_F64_LIMIT: usize = 4000;
/// Single-precision Gram cache limit; larger inputs stream kernel blocks.
const GRAM_F32_LIMIT: usize = 12_000;
/// Number of leading points used for the bandwidth median when the input is
/// too large to hold all pairwise distances.
const MEDIAN_SUBSET: usize = 2000;

enum Gram {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

impl Gram {
    #[inline]
    fn get(&self, idx: usize) -> f64 {
        match self {
            Gram::F64(v) => v[idx],
            Gram::F32(v) => v[idx] as f64,
        }
    }
}

/// sigma^2 for one argument: half the median positive squared distance.
/// Returns None when every pairwise distance is zero.
fn median_bandwidth_sq(x: &[f64]) -> Option<f64> {
    let n = x.len();
    let limit = if n > GRAM_F32_LIMIT { MEDIAN_SUBSET.min(n) } else { n };
    let mut d2: Vec<f64> = Vec::with_capacity(limit * (limit - 1) / 2);
    for i in 0..limit {
        for j in (i + 1)..limit {
            let d = x[i] - x[j];
            let v = d * d;
            if v > 0.0 {
                d2.push(v);
            }
        }
    }
    if d2.is_empty() {
        return None;
    }
    let mid = d2.len() / 2;
    d2.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite distances"));
    let median_part = 0.5 * d2[mid];
    // Collapse guard: sharply peaked marginals (e.g. power-law noise) drive the
    // pairwise-distance median far below the dispersion scale, which makes the
    // kernel resolve estimation noise instead of dependence structure.  Bound
    // the width from below by a dispersion-scaled floor; for distributions
    // without a density spike the median term dominates and the floor is inert
    // (a Gaussian marginal's median width is already ~0.67 sd).
    const FLOOR_SD: f64 = 0.7;
    let mean: f64 = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    Some(median_part.max(FLOOR_SD * FLOOR_SD * var))
}

/// Resolve the squared bandwidth for one argument, or None when degenerate.
fn bandwidth_sq(x: &[f64], width: &KernelWidth) -> Option<f64> {
    match width {
        KernelWidth::MedianHeuristic => median_bandwidth_sq(x),
        KernelWidth::Fixed(s) => {
            if *s > 0.0 {
                Some(s * s)
            } else {
                None
            }
        }
    }
}

/// Build the RBF Gram matrix of a single argument, row-major.
fn build_gram(x: &[f64], sigma_sq: f64, single_precision: bool) -> Gram {
    let n = x.len();
    let inv = -1.0 / (2.0 * sigma_sq);
    if single_precision {
        let mut g = vec![0.0f32; n * n];
        for i in 0..n {
            g[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let d = x[i] - x[j];
                let v = (d * d * inv).exp() as f32;
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        Gram::F32(g)
    } else {
        let mut g = vec![0.0f64; n * n];
        for i in 0..n {
            g[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let d = x[i] - x[j];
                let v = (d * d * inv).exp();
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        Gram::F64(g)
    }
}

struct GramSummary {
    row_sums: Vec<f64>,
    grand_sum: f64,
}

fn summarize(g: &Gram, n: usize) -> GramSummary {
    let mut row_sums = vec![0.0f64; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += g.get(i * n + j);
        }
        row_sums[i] = s;
    }
    let grand_sum = row_sums.iter().sum();
    GramSummary {
        row_sums,
        grand_sum,
    }
}

struct HsicMoments {
    /// `n * HSIC_b`, the test statistic.
    stat: f64,
    /// Estimated mean of `HSIC_b` under independence.
    mean_h: f64,
    /// Estimated variance of `HSIC_b` under independence.
    var_h: f64,
    /// Sample size.
    n: usize,
}

/// One joint pass over both Grams: statistic plus null moments.
fn joint_moments(k: &Gram, l: &Gram, ks: &GramSummary, ls: &GramSummary, n: usize) -> HsicMoments {
    let nf = n as f64;
    let k_gm = ks.grand_sum / (nf * nf);
    let l_gm = ls.grand_sum / (nf * nf);
    let mut sum_cc = 0.0f64; // sum of centered K ∘ centered L
    let mut sum_var = 0.0f64; // off-diagonal sum of (Kc Lc / 6)^2
    for i in 0..n {
        let kmi = ks.row_sums[i] / nf;
        let lmi = ls.row_sums[i] / nf;
        for j in 0..n {
            let kc = k.get(i * n + j) - kmi - ks.row_sums[j] / nf + k_gm;
            let lc = l.get(i * n + j) - lmi - ls.row_sums[j] / nf + l_gm;
            let prod = kc * lc;
            sum_cc += prod;
            if i != j {
                let t = prod / 6.0;
                sum_var += t * t;
            }
        }
    }
    let stat = sum_cc / nf;

    // Means of the off-diagonal kernel entries (diagonals are exactly 1).
    let mu_x = (ks.grand_sum - nf) / (nf * (nf - 1.0));
    let mu_y = (ls.grand_sum - nf) / (nf * (nf - 1.0));
    let mean_h = (1.0 + mu_x * mu_y - mu_x - mu_y) / nf;

    let var_h = sum_var / (nf * (nf - 1.0)) * 72.0 * (nf - 4.0) * (nf - 5.0)
        / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0));

    HsicMoments {
        stat,
        mean_h,
        var_h,
        n,
    }
}

/// Streaming variant recomputing kernel entries in blocks (no Gram storage).
fn streaming_moments(x: &[f64], y: &[f64], sx: f64, sy: f64, n: usize) -> HsicMoments {
    const BLOCK: usize = 1024;
    let invx = -1.0 / (2.0 * sx);
    let invy = -1.0 / (2.0 * sy);
    let nf = n as f64;

    // Pass 1: row sums.
    let mut krow = vec![0.0f64; n];
    let mut lrow = vec![0.0f64; n];
    for i in 0..n {
        let mut ks = 0.0;
        let mut ls = 0.0;
        for j in 0..n {
            let dk = x[i] - x[j];
            let dl = y[i] - y[j];
            ks += (dk * dk * invx).exp();
            ls += (dl * dl * invy).exp();
        }
        krow[i] = ks;
        lrow[i] = ls;
    }
    let k_grand: f64 = krow.iter().sum();
    let l_grand: f64 = lrow.iter().sum();
    let k_gm = k_grand / (nf * nf);
    let l_gm = l_grand / (nf * nf);

    // Pass 2: centered products, blocked for determinism and locality.
    let mut sum_cc = 0.0f64;
    let mut sum_var = 0.0f64;
    let mut start = 0;
    while start < n {
        let end = (start + BLOCK).min(n);
        for i in start..end {
            let kmi = krow[i] / nf;
            let lmi = lrow[i] / nf;
            for j in 0..n {
                let dk = x[i] - x[j];
                let dl = y[i] - y[j];
                let kc = (dk * dk * invx).exp() - kmi - krow[j] / nf + k_gm;
                let lc = (dl * dl * invy).exp() - lmi - lrow[j] / nf + l_gm;
                let prod = kc * lc;
                sum_cc += prod;
                if i != j {
                    let t = prod / 6.0;
                    sum_var += t * t;
                }
            }
        }
        start = end;
    }

    let stat = sum_cc / nf;
    let mu_x = (k_grand - nf) / (nf * (nf - 1.0));
    let mu_y = (l_grand - nf) / (nf * (nf - 1.0));
    let mean_h = (1.0 + mu_x * mu_y - mu_x - mu_y) / nf;
    let var_h = sum_var / (nf * (nf - 1.0)) * 72.0 * (nf - 4.0) * (nf - 5.0)
        / (nf * (nf - 1.0) * (nf - 2.0) * (nf - 3.0));

    HsicMoments {
        stat,
        mean_h,
        var_h,
        n,
    }
}

/// One argument of an HSIC test with its kernel matrix prepared up front,
/// so a column tested against many partners pays the Gram construction once.
pub struct HsicArg {
    values: Vec<f64>,
    sigma_sq: Option<f64>,
    gram: Option<(Gram, GramSummary)>,
}

impl HsicArg {
    /// Validate one sample and precompute its Gram matrix when the sample is
    /// small enough for dense kernel storage.
    pub fn new(x: &[f64], config: &TestConfig) -> Result<Self> {
        let n = x.len();
        if n < 6 {
            return Err(Error::Numerical(format!(
                "HSIC needs at least 6 observations, got {n}"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("HSIC arguments must be finite".into()));
        }
        let sigma_sq = bandwidth_sq(x, &config.kernel_width);
        let gram = match sigma_sq {
            Some(s) if n <= GRAM_F32_LIMIT => {
                let k = build_gram(x, s, n > GRAM_F64_LIMIT);
                let ks = summarize(&k, n);
                Some((k, ks))
            }
            _ => None,
        };
        Ok(HsicArg {
            values: x.to_vec(),
            sigma_sq,
            gram,
        })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.len()
    }

    /// True when the sample is constant: no kernel bandwidth exists, and any
    /// test against it reports independence.
    pub fn degenerate(&self) -> bool {
        self.sigma_sq.is_none()
    }
}

fn permutation_pvalue(
    k: &Gram,
    ks: &GramSummary,
    l: &Gram,
    ls: &GramSummary,
    m: &HsicMoments,
    resamples: usize,
    config: &TestConfig,
) -> Result<HsicResult> {
    if resamples == 0 {
        return Err(Error::Argument("permutation count must be positive".into()));
    }
    let n = m.n;
    let nf = n as f64;
    let k_gm = ks.grand_sum / (nf * nf);
    let l_gm = ls.grand_sum / (nf * nf);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[0x4853_4943, n as u64]));
    let mut perm: Vec<usize> = (0..n).collect();
    let mut at_least = 0usize;
    for _ in 0..resamples {
        perm.shuffle(&mut rng);
        let mut sum_cc = 0.0f64;
        for i in 0..n {
            let kmi = ks.row_sums[i] / nf;
            let pi = perm[i];
            let lmi = ls.row_sums[pi] / nf;
            for j in 0..n {
                let kc = k.get(i * n + j) - kmi - ks.row_sums[j] / nf + k_gm;
                let lc = l.get(pi * n + perm[j]) - lmi - ls.row_sums[perm[j]] / nf + l_gm;
                sum_cc += kc * lc;
            }
        }
        if sum_cc / nf >= m.stat {
            at_least += 1;
        }
    }
    let p_value = (1.0 + at_least as f64) / (1.0 + resamples as f64);
    Ok(HsicResult {
        p_value,
        statistic: m.stat,
        degenerate: false,
    })
}

/// HSIC test over two prepared arguments, reusing their cached kernels.
pub fn hsic_pvalue_prepared(
    a: &HsicArg,
    b: &HsicArg,
    config: &TestConfig,
) -> Result<HsicResult> {
    let n = a.n();
    if b.n() != n {
        return Err(Error::Argument(format!(
            "mismatched sample sizes {n} and {}",
            b.n()
        )));
    }
    if a.degenerate() || b.degenerate() {
        // A constant argument is independent of anything.
        return Ok(HsicResult {
            p_value: 1.0,
            statistic: 0.0,
            degenerate: true,
        });
    }

    if n > GRAM_F32_LIMIT {
        if let PvalueMethod::Permutation(_) = config.hsic_pvalue_method {
            return Err(Error::Unsupported(format!(
                "permutation p-values require at most {GRAM_F32_LIMIT} rows, got {n}"
            )));
        }
        let (sx, sy) = (a.sigma_sq.expect("not degenerate"), b.sigma_sq.expect("not degenerate"));
        let m = streaming_moments(&a.values, &b.values, sx, sy, n);
        return finish_gamma(m);
    }

    let (k, ks) = a.gram.as_ref().expect("gram prepared below the size limit");
    let (l, ls) = b.gram.as_ref().expect("gram prepared below the size limit");
    let m = joint_moments(k, l, ks, ls, n);

    match config.hsic_pvalue_method {
        PvalueMethod::GammaApprox => finish_gamma(m),
        PvalueMethod::Permutation(resamples) => {
            permutation_pvalue(k, ks, l, ls, &m, resamples, config)
        }
    }
}

/// Test statistical independence of two univariate samples with HSIC.
///
/// Uses Gaussian kernels with per-argument bandwidths. The p-value comes
/// from a two-moment gamma fit of the null distribution by default, or from
/// a permutation resample of the second argument.
pub fn hsic_pvalue(x: &[f64], y: &[f64], config: &TestConfig) -> Result<HsicResult> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::Argument(format!(
            "mismatched sample sizes {n} and {}",
            y.len()
        )));
    }
    let a = HsicArg::new(x, config)?;
    let b = HsicArg::new(y, config)?;
    hsic_pvalue_prepared(&a, &b, config)
}

fn finish_gamma(m: HsicMoments) -> Result<HsicResult> {
    if !(m.mean_h > 0.0) || !(m.var_h > 0.0) {
        // Kernel matrices carried no usable variation.
        return Ok(HsicResult {
            p_value: 1.0,
            statistic: m.stat,
            degenerate: true,
        });
    }
    // The statistic is n * HSIC_b, whose null gamma fit has
    // shape = mean^2/var and scale = n * var/mean in terms of the HSIC_b
    // moments.
    let shape = m.mean_h * m.mean_h / m.var_h;
    let scale = m.n as f64 * m.var_h / m.mean_h;
    let gamma = Gamma::new(shape, 1.0 / scale).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = gamma.sf(m.stat);
    Ok(HsicResult {
        p_value,
        statistic: m.stat,
        degenerate: false,
    })
}

/// Combine independent p-values into one (Fisher's method).
pub fn fisher_combine(p_values: &[f64]) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::Argument("no p-values to combine".into()));
    }
    let mut t = 0.0f64;
    for &p in p_values {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("p-value {p} outside [0, 1]")));
        }
        let clamped = p.max(f64::MIN_POSITIVE);
        t += -2.0 * clamped.ln();
    }
    let chi = ChiSquared::new(2.0 * p_values.len() as f64)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(chi.sf(t))
}

/// Residual of the least-squares regression of column `y_col` on the
/// centered columns `z_cols`.
pub fn ols_residual(data: &DataMatrix, z_cols: &[usize], y_col: usize) -> Result<Vec<f64>> {
    if z_cols.is_empty() {
        return Err(Error::Argument("regression needs at least one regressor".into()));
    }
    for &j in z_cols.iter().chain(std::iter::once(&y_col)) {
        if j >= data.n_cols() {
            return Err(Error::Reference(format!(
                "column index {j} outside 0..{}",
                data.n_cols()
            )));
        }
    }
    let n = data.n_rows();
    let k = z_cols.len();
    let centered = |j: usize| -> Vec<f64> {
        let col = data.values().column(j);
        let mean = col.sum() / n as f64;
        col.iter().map(|v| v - mean).collect()
    };
    let z: Vec<Vec<f64>> = z_cols.iter().map(|&j| centered(j)).collect();
    let yc = centered(y_col);

    let mut xtx = DMatrix::<f64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let s: f64 = z[a].iter().zip(&z[b]).map(|(p, q)| p * q).sum();
            xtx[(a, b)] = s;
            xtx[(b, a)] = s;
        }
    }
    let eig = xtx.clone().symmetric_eigen();
    let max_l = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min_l = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_l > 0.0) || max_l / min_l > 1e12 {
        return Err(Error::Numerical(
            "regressor columns are collinear within working precision".into(),
        ));
    }

    let mut xty = DMatrix::<f64>::zeros(k, 1);
    for a in 0..k {
        xty[(a, 0)] = z[a].iter().zip(&yc).map(|(p, q)| p * q).sum();
    }
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::Numerical("normal equations are singular".into()))?;

    let mut resid = yc;
    for a in 0..k {
        let w = beta[(a, 0)];
        for (r, zv) in resid.iter_mut().zip(&z[a]) {
            *r -= w * zv;
        }
    }
    Ok(resid)
}

/// Per-column cache of prepared HSIC arguments over one data matrix.
///
/// Search procedures test the same observed columns against many candidate
/// surrogates, so each column's kernel matrix is built once and shared.
/// Pairwise column p-values are memoized too, since the cluster search
/// re-asks the same dependence questions across rounds.
pub struct GramStore<'a> {
    data: &'a DataMatrix,
    config: TestConfig,
    columns: RefCell<BTreeMap<usize, Rc<HsicArg>>>,
    pairs: RefCell<BTreeMap<(usize, usize), f64>>,
}

impl<'a> GramStore<'a> {
    /// New empty cache over `data` under the given test configuration.
    pub fn new(data: &'a DataMatrix, config: &TestConfig) -> Self {
        GramStore {
            data,
            config: config.clone(),
            columns: RefCell::new(BTreeMap::new()),
            pairs: RefCell::new(BTreeMap::new()),
        }
    }

    /// The underlying data matrix.
    pub fn data(&self) -> &DataMatrix {
        self.data
    }

    /// The configuration every cached computation uses.
    pub fn config(&self) -> &TestConfig {
        &self.config
    }

    /// Prepared HSIC argument for column `j`, built on first use.
    pub fn column_arg(&self, j: usize) -> Result<Rc<HsicArg>> {
        if j >= self.data.n_cols() {
            return Err(Error::Reference(format!(
                "column index {j} outside 0..{}",
                self.data.n_cols()
            )));
        }
        if let Some(arg) = self.columns.borrow().get(&j) {
            return Ok(Rc::clone(arg));
        }
        let arg = Rc::new(HsicArg::new(self.data.column(j), &self.config)?);
        self.columns.borrow_mut().insert(j, Rc::clone(&arg));
        Ok(arg)
    }

    /// Memoized HSIC p-value between columns `i` and `j`. The pair is
    /// ordered internally, so both argument orders give one answer.
    pub fn pair_pvalue(&self, i: usize, j: usize) -> Result<f64> {
        let key = (i.min(j), i.max(j));
        if let Some(&p) = self.pairs.borrow().get(&key) {
            return Ok(p);
        }
        let a = self.column_arg(key.0)?;
        let b = self.column_arg(key.1)?;
        let p = hsic_pvalue_prepared(&a, &b, &self.config)?.p_value;
        self.pairs.borrow_mut().insert(key, p);
        Ok(p)
    }
}
