//! Synthetic model generation and sampling.
//!
//! Provides the four canonical benchmark structures, random latent-tree-like
//! graphs, and an i.i.d. sampler. All randomness is drawn from ChaCha
//! streams keyed by [`GenConfig::seed`]: stream 0 feeds structure/coefficient
//! draws, stream `1 + v` feeds the noise of variable `v`, so every variable
//! has its own counter-based stream and results are reproducible regardless
//! of evaluation order.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::LingLamGraph;
use crate::stats::DataMatrix;

/// Zero-mean non-Gaussian noise law attached to one variable.
///
/// Every family is non-Gaussian by construction; there is deliberately no
/// Gaussian variant. Draws are centered so the population mean is exactly
/// zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum NoiseSpec {
    /// A uniform variable on `[-1, 1]` raised to `exponent`.
    UniformPower { exponent: u32 },
    /// A uniform variable on `[low, high]`, shifted to zero mean.
    Uniform { low: f64, high: f64 },
    /// Piecewise-linear inverse CDF through equally spaced quantile knots,
    /// shifted to zero mean.
    Custom { quantiles: Vec<f64> },
}

impl NoiseSpec {
    /// Check the family invariants: zero-mean-able, finite nonzero variance.
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseSpec::UniformPower { exponent } => {
                if *exponent == 0 {
                    return Err(Error::Structure(
                        "UniformPower exponent must be at least 1".into(),
                    ));
                }
            }
            NoiseSpec::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::Structure(format!(
                        "Uniform range [{low}, {high}] is not a valid interval"
                    )));
                }
            }
            NoiseSpec::Custom { quantiles } => {
                if quantiles.len() < 2 {
                    return Err(Error::Structure(
                        "Custom noise needs at least two quantile knots".into(),
                    ));
                }
                if quantiles.iter().any(|q| !q.is_finite()) {
                    return Err(Error::Structure("Custom quantiles must be finite".into()));
                }
                if quantiles.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::Structure(
                        "Custom quantiles must be nondecreasing".into(),
                    ));
                }
                if self.variance() <= 0.0 {
                    return Err(Error::Structure(
                        "Custom noise must have nonzero variance".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Raw moment `E[V^k]` of the *uncentered* draw.
    fn raw_moment(&self, k: u32) -> f64 {
        match self {
            // V = U^p with U ~ Uniform[-1,1]: E[U^(kp)] is 1/(kp+1) for even
            // powers and 0 for odd ones.
            NoiseSpec::UniformPower { exponent } => {
                let kp = k * exponent;
                if kp % 2 == 0 {
                    1.0 / (kp as f64 + 1.0)
                } else {
                    0.0
                }
            }
            // Moments of Uniform[low, high]: integral of v^k / (high-low).
            NoiseSpec::Uniform { low, high } => {
                (high.powi(k as i32 + 1) - low.powi(k as i32 + 1))
                    / ((k as f64 + 1.0) * (high - low))
            }
            // Piecewise-linear quantile function: integrate segment by
            // segment; each segment contributes ((b^{k+1} - a^{k+1}) /
            // ((k+1)(b - a))) / (m - 1).
            NoiseSpec::Custom { quantiles } => {
                let m = quantiles.len();
                let mut total = 0.0;
                for w in quantiles.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let seg = if (b - a).abs() < 1e-300 {
                        a.powi(k as i32)
                    } else {
                        (b.powi(k as i32 + 1) - a.powi(k as i32 + 1))
                            / ((k as f64 + 1.0) * (b - a))
                    };
                    total += seg;
                }
                total / (m as f64 - 1.0)
            }
        }
    }

    /// Mean of the uncentered draw (subtracted by [`draw_noise`]).
    fn raw_mean(&self) -> f64 {
        self.raw_moment(1)
    }

    /// Population variance of the (centered) law.
    pub fn variance(&self) -> f64 {
        let m1 = self.raw_moment(1);
        self.raw_moment(2) - m1 * m1
    }

    /// Population excess kurtosis of the (centered) law.
    pub fn excess_kurtosis(&self) -> f64 {
        let m1 = self.raw_moment(1);
        let m2 = self.raw_moment(2);
        let m3 = self.raw_moment(3);
        let m4 = self.raw_moment(4);
        let var = m2 - m1 * m1;
        let mu4 = m4 - 4.0 * m3 * m1 + 6.0 * m2 * m1 * m1 - 3.0 * m1.powi(4);
        mu4 / (var * var) - 3.0
    }
}

/// Generation settings: coefficient band, seed, and sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Master seed for structure and noise streams.
    pub seed: u64,
    /// Number of rows drawn by [`sample`].
    pub sample_size: usize,
    /// When set, each noise law is scaled to unit variance before mixing.
    pub rescale_noise: bool,
    /// Lower bound of the absolute coefficient band.
    pub coef_low: f64,
    /// Upper bound of the absolute coefficient band.
    pub coef_high: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 0,
            sample_size: 1000,
            rescale_noise: false,
            coef_low: 0.5,
            coef_high: 2.0,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        if !(self.coef_low > 0.0 && self.coef_low < self.coef_high) {
            return Err(Error::Structure(format!(
                "coefficient band [{}, {}] must satisfy 0 < low < high",
                self.coef_low, self.coef_high
            )));
        }
        Ok(())
    }

    /// Draw one coefficient: magnitude in the band, random sign.
    fn draw_coef(&self, rng: &mut ChaCha8Rng) -> f64 {
        let magnitude = rng.random_range(self.coef_low..self.coef_high);
        if rng.random_bool(0.5) {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// Stable 64-bit mix used to derive independent stream keys from a seed and
/// a sequence of role tags (splitmix64 finalizer).
pub(crate) fn mix_seed(seed: u64, tags: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut h = splitmix(seed);
    for &t in tags {
        h = splitmix(h ^ splitmix(t));
    }
    h
}

/// RNG for structure/coefficient draws (stream 0 of the seed).
fn structure_rng(config: &GenConfig) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    rng
}

/// RNG feeding the noise of global variable `v` (stream `1 + v`).
fn noise_rng(config: &GenConfig, v: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1 + v as u64);
    rng
}

/// Draw `n` centered values from a noise law.
pub fn draw_noise(spec: &NoiseSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mean = spec.raw_mean();
    (0..n)
        .map(|_| {
            let raw = match spec {
                NoiseSpec::UniformPower { exponent } => {
                    rng.random_range(-1.0..1.0f64).powi(*exponent as i32)
                }
                NoiseSpec::Uniform { low, high } => rng.random_range(*low..*high),
                NoiseSpec::Custom { quantiles } => {
                    let m = quantiles.len();
                    let t = rng.random::<f64>() * (m as f64 - 1.0);
                    let i = (t.floor() as usize).min(m - 2);
                    let frac = t - i as f64;
                    quantiles[i] + (quantiles[i + 1] - quantiles[i]) * frac
                }
            };
            raw - mean
        })
        .collect()
}

/// Names `L1..Lk` and `X1..Xm`.
fn names(latents: usize, observed: usize) -> (Vec<String>, Vec<String>) {
    (
        (1..=latents).map(|i| format!("L{i}")).collect(),
        (1..=observed).map(|i| format!("X{i}")).collect(),
    )
}

/// Build one of the four canonical structures with freshly drawn
/// coefficients.
///
/// Case 1: `L1 -> L2`, two pure children each. Case 2: case 1 plus
/// `L1 -> {X3, X4}` and `{L1, L2} -> {X5, X6}`. Case 3: the latent triangle
/// `L1 -> L2`, `L1 -> L3`, `L2 -> L3` with three pure children each.
/// Case 4: four latents over eight indicators, the first four loading on two
/// latents jointly.
pub fn case_graph(case_id: usize, config: &GenConfig) -> Result<LingLamGraph> {
    config.validate()?;
    // Edge lists are (child, parent) pairs over the global index space.
    let (latents, observed, edges): (usize, usize, Vec<(usize, usize)>) = match case_id {
        1 => (
            2,
            4,
            vec![(1, 0), (2, 0), (3, 0), (4, 1), (5, 1)],
        ),
        2 => (
            2,
            6,
            vec![
                (1, 0),
                (2, 0),
                (3, 0),
                (4, 1),
                (5, 1),
                (4, 0),
                (5, 0),
                (6, 0),
                (6, 1),
                (7, 0),
                (7, 1),
            ],
        ),
        3 => {
            let mut e = vec![(1, 0), (2, 0), (2, 1)];
            for (latent, first_child) in [(0usize, 3usize), (1, 6), (2, 9)] {
                for c in 0..3 {
                    e.push((first_child + c, latent));
                }
            }
            (3, 9, e)
        }
        4 => {
            let mut e = vec![(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];
            for x in 4..8 {
                e.push((x, 0));
                e.push((x, 1));
            }
            e.push((8, 2));
            e.push((9, 2));
            e.push((10, 3));
            e.push((11, 3));
            (4, 8, e)
        }
        other => {
            return Err(Error::Argument(format!(
                "case id {other} outside 1..=4"
            )))
        }
    };

    let total = latents + observed;
    let mut rng = structure_rng(config);
    let mut coef = DMatrix::<f64>::zeros(total, total);
    for (child, parent) in edges {
        coef[(child, parent)] = config.draw_coef(&mut rng);
    }
    let (latent_names, observed_names) = names(latents, observed);
    LingLamGraph::new(
        latent_names,
        observed_names,
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
}

/// Build a random structure: each non-root latent takes each earlier latent
/// as a parent with probability 1/2 (at least one parent forced), and every
/// latent drives `children_per_latent` pure observed children.
pub fn random_graph(
    latents: usize,
    children_per_latent: usize,
    config: &GenConfig,
) -> Result<LingLamGraph> {
    config.validate()?;
    if latents == 0 {
        return Err(Error::Argument("at least one latent variable required".into()));
    }
    if children_per_latent < 2 {
        return Err(Error::Argument(
            "each latent needs at least two pure children".into(),
        ));
    }
    let observed = latents * children_per_latent;
    let total = latents + observed;
    let mut rng = structure_rng(config);
    let mut coef = DMatrix::<f64>::zeros(total, total);

    for j in 1..latents {
        let mut any = false;
        for i in 0..j {
            if rng.random_bool(0.5) {
                coef[(j, i)] = config.draw_coef(&mut rng);
                any = true;
            }
        }
        if !any {
            let i = rng.random_range(0..j);
            coef[(j, i)] = config.draw_coef(&mut rng);
        }
    }
    for j in 0..latents {
        for c in 0..children_per_latent {
            let x = latents + j * children_per_latent + c;
            coef[(x, j)] = config.draw_coef(&mut rng);
        }
    }

    let (latent_names, observed_names) = names(latents, observed);
    LingLamGraph::new(
        latent_names,
        observed_names,
        coef,
        vec![NoiseSpec::UniformPower { exponent: 5 }; total],
        (0..total).collect(),
    )
}

/// Draw `config.sample_size` i.i.d. rows from the model and return the
/// observed columns (named after the observed variables, centered exactly).
pub fn sample(graph: &LingLamGraph, config: &GenConfig) -> Result<DataMatrix> {
    let n = config.sample_size;
    let total = graph.n_total();
    let mut values: Vec<Option<Vec<f64>>> = vec![None; total];

    for &v in graph.causal_order() {
        let spec = &graph.noise_specs()[v];
        let mut rng = noise_rng(config, v);
        let mut col = draw_noise(spec, n, &mut rng);
        if config.rescale_noise {
            let s = spec.variance().sqrt();
            if s > 0.0 {
                for x in col.iter_mut() {
                    *x /= s;
                }
            }
        }
        for p in 0..total {
            let c = graph.coefficient(v, p);
            if c != 0.0 {
                let parent = values[p]
                    .as_ref()
                    .expect("causal order guarantees parents are filled first");
                for (x, pv) in col.iter_mut().zip(parent) {
                    *x += c * pv;
                }
            }
        }
        values[v] = Some(col);
    }

    let columns: Vec<(String, Vec<f64>)> = (graph.n_latents()..total)
        .map(|v| {
            let mut col = values[v].take().expect("observed column generated");
            let mean = col.iter().sum::<f64>() / n as f64;
            for x in col.iter_mut() {
                *x -= mean;
            }
            (graph.variable(v).name.clone(), col)
        })
        .collect();
    DataMatrix::from_columns(columns)
}
