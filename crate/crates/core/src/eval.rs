//! Scoring of discovery output against a known generating model, plus the
//! benchmark harness that sweeps structures, sample sizes, and repetitions.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::discovery::{discover, DiscoveryResult};
use crate::error::{Error, Result};
use crate::graph::{CausalCluster, LingLamGraph};
use crate::stats::TestConfig;
use crate::synth::{case_graph, mix_seed, random_graph, sample, GenConfig};

/// Assignment of estimated clusters to true clusters by best member overlap.
#[derive(Debug, Clone)]
pub struct ClusterMatching {
    /// For each estimated cluster, the true cluster with the largest
    /// Jaccard overlap (ties resolve to the smaller true index); `None`
    /// when the overlap is zero everywhere.
    pub assignments: Vec<Option<usize>>,
    /// True-cluster indices no estimate was assigned to, ascending.
    pub unmatched_true: Vec<usize>,
}

/// Match each estimated cluster to the true cluster it overlaps most.
pub fn match_clusters(est: &[CausalCluster], g: &LingLamGraph) -> Result<ClusterMatching> {
    let truth = g.true_clusters()?;
    let mut assignments = Vec::with_capacity(est.len());
    for cluster in est {
        let mut best: Option<(usize, f64)> = None;
        for (t, true_cluster) in truth.iter().enumerate() {
            let inter = cluster.members.intersection(&true_cluster.members).count();
            if inter == 0 {
                continue;
            }
            let union = cluster.members.union(&true_cluster.members).count();
            let jaccard = inter as f64 / union as f64;
            if best.map_or(true, |(_, b)| jaccard > b) {
                best = Some((t, jaccard));
            }
        }
        assignments.push(best.map(|(t, _)| t));
    }
    let assigned: BTreeSet<usize> = assignments.iter().flatten().copied().collect();
    let unmatched_true = (0..truth.len()).filter(|t| !assigned.contains(t)).collect();
    Ok(ClusterMatching {
        assignments,
        unmatched_true,
    })
}

/// Error counts and rates for one scored discovery result.
#[derive(Debug, Clone)]
pub struct MetricReport {
    /// Raw counts: (omitted latents, committed latents, total true latents,
    /// mismeasured observed variables, total observed variables).
    pub counts: (usize, usize, usize, usize, usize),
    /// Share of true latent dimensions missing from the estimate.
    pub latent_omission: f64,
    /// Share of estimated latent dimensions in excess of the truth.
    pub latent_commission: f64,
    /// Share of observed variables placed in a foreign cluster.
    pub mismeasurement: f64,
    /// Whether the estimated causal order is consistent with the true one.
    pub correct_ordering: bool,
}

/// Score one discovery result against the generating model.
pub fn score(est: &DiscoveryResult, g: &LingLamGraph) -> Result<MetricReport> {
    let truth = g.true_clusters()?;
    let matching = match_clusters(&est.clusters, g)?;
    let total_latents: usize = truth.iter().map(|c| c.latent_dim).sum();
    let total_observed = g.n_observed();

    // Omission: true latent dimensions not covered by any matched estimate.
    let matched: BTreeSet<usize> = matching.assignments.iter().flatten().copied().collect();
    let covered: usize = matched.iter().map(|&t| truth[t].latent_dim).sum();
    let omitted = total_latents - covered;

    // Commission: estimated dimensions beyond each matched true cluster's
    // dimension, plus everything claimed by unmatched estimates.
    let mut committed = 0usize;
    for (t, true_cluster) in truth.iter().enumerate() {
        let assigned_dims: usize = est
            .clusters
            .iter()
            .zip(&matching.assignments)
            .filter(|(_, a)| **a == Some(t))
            .map(|(c, _)| c.latent_dim)
            .sum();
        committed += assigned_dims.saturating_sub(true_cluster.latent_dim);
    }
    committed += est
        .clusters
        .iter()
        .zip(&matching.assignments)
        .filter(|(_, a)| a.is_none())
        .map(|(c, _)| c.latent_dim)
        .sum::<usize>();

    // Mismeasurement: members sitting in a cluster matched to a foreign set.
    let mut mismeasured = 0usize;
    for (cluster, assignment) in est.clusters.iter().zip(&matching.assignments) {
        if let Some(t) = assignment {
            mismeasured += cluster.members.difference(&truth[*t].members).count();
        }
    }

    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            (num as f64 / den as f64).min(1.0)
        }
    };

    let correct_ordering = ordering_consistent(est, &matching, g)?;

    Ok(MetricReport {
        counts: (
            omitted,
            committed,
            total_latents,
            mismeasured,
            total_observed,
        ),
        latent_omission: ratio(omitted, total_latents),
        latent_commission: ratio(committed, total_latents),
        mismeasurement: ratio(mismeasured, total_observed),
        correct_ordering,
    })
}

/// Whether the estimated sequence visits true clusters in an order
/// consistent with the latent ancestry: no cluster may appear after another
/// that it strictly precedes.
fn ordering_consistent(
    est: &DiscoveryResult,
    matching: &ClusterMatching,
    g: &LingLamGraph,
) -> Result<bool> {
    let latent_sets = g.true_cluster_latents()?;
    let coef = g.coefficients();
    let n_lat = g.n_latents();

    // reach[a] = latents strictly downstream of a (paths of length >= 1).
    let mut reach: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_lat];
    for a in 0..n_lat {
        let mut stack: Vec<usize> = (0..n_lat).filter(|&c| coef[(c, a)] != 0.0).collect();
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        while let Some(c) = stack.pop() {
            if !seen.insert(c) {
                continue;
            }
            for d in 0..n_lat {
                if coef[(d, c)] != 0.0 {
                    stack.push(d);
                }
            }
        }
        reach[a] = seen;
    }

    // P strictly precedes Q when some latent of P is an ancestor of a
    // latent belonging to Q alone.
    let precedes = |p_set: &BTreeSet<usize>, q_set: &BTreeSet<usize>| {
        p_set
            .iter()
            .any(|&p| q_set.difference(p_set).any(|&q| reach[p].contains(&q)))
    };

    let mut visited: Vec<usize> = Vec::new();
    for &e in &est.order.sequence {
        if e >= est.clusters.len() {
            return Err(Error::Argument(format!(
                "order references cluster {e} but only {} exist",
                est.clusters.len()
            )));
        }
        if let Some(t) = matching.assignments[e] {
            visited.push(t);
        }
    }
    for i in 0..visited.len() {
        for j in i + 1..visited.len() {
            if precedes(&latent_sets[visited[j]], &latent_sets[visited[i]]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// One benchmark cell: a structure at one sample size, aggregated over
/// repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    /// Structure label, e.g. `case1` or `random5x3`.
    pub case: String,
    /// Sample size used for every repetition.
    pub n: usize,
    /// Number of repetitions aggregated.
    pub reps: usize,
    /// Mean latent-omission rate.
    pub omission: f64,
    /// Mean latent-commission rate.
    pub commission: f64,
    /// Mean mismeasurement rate.
    pub mismeasurement: f64,
    /// Fraction of repetitions with a consistent causal order.
    pub ordering_rate: f64,
    /// Repetitions with any omission at all.
    pub omission_failures: usize,
    /// Repetitions with any commission at all.
    pub commission_failures: usize,
    /// Repetitions with any mismeasurement at all.
    pub mismeasurement_failures: usize,
}

/// Seeding and test configuration shared by every benchmark repetition.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    /// Master seed; every repetition derives its own stream from it.
    pub master_seed: u64,
    /// Independence-test configuration passed to discovery.
    pub test: TestConfig,
}

/// Which structure a benchmark cell samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseSpec {
    /// One of the fixed benchmark structures (1 through 4).
    Case(usize),
    /// A freshly drawn random structure per repetition.
    Random { latents: usize, children: usize },
}

impl CaseSpec {
    fn label(&self) -> String {
        match self {
            CaseSpec::Case(k) => format!("case{k}"),
            CaseSpec::Random { latents, children } => format!("random{latents}x{children}"),
        }
    }

    fn rep_seed(&self, master: u64, n: usize, rep: usize) -> u64 {
        match self {
            CaseSpec::Case(k) => mix_seed(master, &[1, *k as u64, n as u64, rep as u64]),
            CaseSpec::Random { latents, children } => mix_seed(
                master,
                &[2, *latents as u64, *children as u64, n as u64, rep as u64],
            ),
        }
    }

    fn build(&self, config: &GenConfig) -> Result<LingLamGraph> {
        match self {
            CaseSpec::Case(k) => case_graph(*k, config),
            CaseSpec::Random { latents, children } => random_graph(*latents, *children, config),
        }
    }
}

/// Run the full benchmark sweep: every structure at every sample size, with
/// `reps` repetitions per cell. Repetitions run in parallel but results are
/// aggregated in repetition order, so the output depends only on the seeds.
pub fn benchmark(
    cases: &[CaseSpec],
    sizes: &[usize],
    reps: usize,
    config: &BenchmarkConfig,
) -> Result<Vec<CellReport>> {
    if reps == 0 {
        return Err(Error::Argument(
            "benchmark needs at least one repetition".into(),
        ));
    }
    let mut out = Vec::with_capacity(cases.len() * sizes.len());
    for case in cases {
        for &n in sizes {
            let reports: Vec<MetricReport> = (0..reps)
                .into_par_iter()
                .map(|rep| -> Result<MetricReport> {
                    let gen = GenConfig {
                        seed: case.rep_seed(config.master_seed, n, rep),
                        sample_size: n,
                        ..GenConfig::default()
                    };
                    let g = case.build(&gen)?;
                    let data = sample(&g, &gen)?;
                    let result = discover(&data, &config.test)?;
                    score(&result, &g)
                })
                .collect::<Result<Vec<_>>>()?;

            let mut cell = CellReport {
                case: case.label(),
                n,
                reps,
                omission: 0.0,
                commission: 0.0,
                mismeasurement: 0.0,
                ordering_rate: 0.0,
                omission_failures: 0,
                commission_failures: 0,
                mismeasurement_failures: 0,
            };
            let mut ordered = 0usize;
            for report in &reports {
                cell.omission += report.latent_omission;
                cell.commission += report.latent_commission;
                cell.mismeasurement += report.mismeasurement;
                if report.latent_omission > 0.0 {
                    cell.omission_failures += 1;
                }
                if report.latent_commission > 0.0 {
                    cell.commission_failures += 1;
                }
                if report.mismeasurement > 0.0 {
                    cell.mismeasurement_failures += 1;
                }
                if report.correct_ordering {
                    ordered += 1;
                }
            }
            let denom = reps as f64;
            cell.omission /= denom;
            cell.commission /= denom;
            cell.mismeasurement /= denom;
            cell.ordering_rate = ordered as f64 / denom;
            out.push(cell);
        }
    }
    Ok(out)
}

/// Table-cell rendering: the mean to two decimals with the failure count in
/// parentheses.
pub fn format_cell(mean: f64, failures: usize) -> String {
    format!("{mean:.2}({failures})")
}

/// CSV rendering of a benchmark run, one line per cell.
pub fn report_csv(cells: &[CellReport]) -> String {
    let mut out = String::from(
        "case,n,reps,latent_omission,latent_commission,mismeasurement,ordering_rate\n",
    );
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.2}\n",
            c.case,
            c.n,
            c.reps,
            format_cell(c.omission, c.omission_failures),
            format_cell(c.commission, c.commission_failures),
            format_cell(c.mismeasurement, c.mismeasurement_failures),
            c.ordering_rate,
        ));
    }
    out
}

/// Whitespace-separated ordering rates, ready for plotting.
pub fn gnuplot_rates(cells: &[CellReport]) -> String {
    let mut out = String::from("# case n ordering_rate\n");
    for c in cells {
        out.push_str(&format!("{} {} {:.2}\n", c.case, c.n, c.ordering_rate));
    }
    out
}
