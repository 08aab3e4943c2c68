//! Latent-structure discovery: cluster search, root selection, and causal
//! ordering, all built on GIN verdicts.
//!
//! Every procedure is written against the [`GinJudge`] trait so the same
//! search runs on sample data (HSIC-backed tests) and against the exact
//! population judge used to validate the search logic itself.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::gin::{gin_on_store, GinResult};
use crate::graph::{CausalCluster, LingLamGraph};
use crate::oracle::{combinations, exact_gin, mixing_matrix, support_of_rows};
use crate::stats::{fisher_combine, DataMatrix, GramStore, TestConfig};

/// Supplier of GIN and dependence verdicts over a fixed set of named columns.
///
/// Column indices in every method refer to positions in
/// [`GinJudge::column_names`].
pub trait GinJudge {
    /// The observed column names, fixing the index space for all verdicts.
    fn column_names(&self) -> &[String];

    /// Whether the annihilating combination of the `y` columns is
    /// independent of every `z` column, together with the combined p-value
    /// backing the verdict (an exact judge reports 1.0 or 0.0).
    fn gin(&self, z: &[usize], y: &[usize], purpose: &str) -> Result<(bool, f64)>;

    /// Whether column `x` is statistically dependent on the `others` taken
    /// together.
    fn dependent(&self, x: usize, others: &[usize]) -> Result<bool>;
}

/// One recorded independence test: what was asked and the full verdict.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    /// Human-readable account of why the test ran and on which columns.
    pub description: String,
    /// The complete test result, including per-column p-values.
    pub result: GinResult,
}

/// Which columns serve as the conditioning context during cluster search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterContext {
    /// Test candidate subsets against all remaining columns, clustered or
    /// not. This is the default and identifies nested structures.
    Full,
    /// Test candidate subsets against the shrinking unclustered pool only.
    Pool,
}

/// Root chosen by one round of directional testing.
#[derive(Debug, Clone, Copy)]
pub struct RootChoice {
    /// Position within the candidate list handed to the search.
    pub index: usize,
    /// Set when no candidate passed every directional test and the choice
    /// fell back to the least-contradicted one.
    pub low_confidence: bool,
}

/// Accumulated surrogate columns from clusters already placed in the order.
///
/// Earlier roots keep contributing to later rounds: their Y-side columns
/// extend every candidate's Y set and their Z-side columns extend every
/// candidate's Z set, which keeps sibling branches comparable after their
/// common ancestor is removed.
#[derive(Debug, Clone, Default)]
pub struct RootSearchState {
    /// Original cluster indices already placed, in placement order.
    pub resolved: Vec<usize>,
    /// Columns contributed to the Z side of every subsequent test.
    pub z_half: Vec<usize>,
    /// Columns contributed to the Y side of every subsequent test.
    pub y_half: Vec<usize>,
}

/// A causal ordering over a cluster list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalOrder {
    /// Cluster indices from causally earliest to latest.
    pub sequence: Vec<usize>,
    /// Set when any round of the search had to fall back to a
    /// least-contradicted choice.
    pub low_confidence: bool,
}

/// Full output of the discovery pipeline.
#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    /// Identified clusters with their latent dimensions.
    pub clusters: Vec<CausalCluster>,
    /// Causal order over `clusters`.
    pub order: CausalOrder,
    /// Column names that never joined a cluster.
    pub unclustered: BTreeSet<String>,
    /// Every independence test executed, in execution order.
    pub trace: Vec<TraceEntry>,
}

/// Sample-level judge: HSIC-backed GIN tests over one data matrix, with
/// kernel matrices cached per column and a record of every test run.
struct SampleJudge<'a> {
    store: GramStore<'a>,
    trace: RefCell<Vec<TraceEntry>>,
}

impl<'a> SampleJudge<'a> {
    fn new(data: &'a DataMatrix, config: &TestConfig) -> Self {
        SampleJudge {
            store: GramStore::new(data, config),
            trace: RefCell::new(Vec::new()),
        }
    }

    fn into_trace(self) -> Vec<TraceEntry> {
        self.trace.into_inner()
    }
}

impl GinJudge for SampleJudge<'_> {
    fn column_names(&self) -> &[String] {
        self.store.data().names()
    }

    fn gin(&self, z: &[usize], y: &[usize], purpose: &str) -> Result<(bool, f64)> {
        let result = gin_on_store(&self.store, z, y)?;
        let names = self.store.data().names();
        let label = |cols: &[usize]| {
            cols.iter()
                .map(|&c| names[c].as_str())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let verdict = (result.satisfied, result.combined_p);
        self.trace.borrow_mut().push(TraceEntry {
            description: format!("{purpose}: GIN of [{}] against [{}]", label(y), label(z)),
            result,
        });
        Ok(verdict)
    }

    fn dependent(&self, x: usize, others: &[usize]) -> Result<bool> {
        if others.is_empty() {
            return Err(Error::Argument(
                "dependence check needs at least one partner column".into(),
            ));
        }
        let mut p_values = Vec::with_capacity(others.len());
        for &o in others {
            p_values.push(self.store.pair_pvalue(x, o)?);
        }
        Ok(fisher_combine(&p_values)? < self.store.config().alpha)
    }
}

/// Exact population judge over a known generating model.
///
/// GIN verdicts come from the noise-support certificate of the annihilating
/// directions; dependence verdicts from noise-support overlap. Column
/// indices refer to the observed variables in graph order, matching the
/// columns that sampling the same graph would produce.
pub struct OracleJudge {
    graph: LingLamGraph,
    names: Vec<String>,
    base: usize,
    supports: Vec<BTreeSet<usize>>,
}

impl OracleJudge {
    /// Build the judge for one generating model.
    pub fn new(g: &LingLamGraph) -> Result<Self> {
        let mixing = mixing_matrix(g)?;
        let base = g.n_latents();
        let total = g.n_total();
        let names: Vec<String> = (base..total)
            .map(|v| g.variable(v).name.clone())
            .collect();
        let supports: Vec<BTreeSet<usize>> = (base..total)
            .map(|v| support_of_rows(&mixing.matrix, &[v]))
            .collect();
        Ok(OracleJudge {
            graph: g.clone(),
            names,
            base,
            supports,
        })
    }

    fn to_graph_indices(&self, cols: &[usize]) -> Result<Vec<usize>> {
        cols.iter()
            .map(|&c| {
                if c >= self.names.len() {
                    Err(Error::Reference(format!(
                        "column index {c} outside 0..{}",
                        self.names.len()
                    )))
                } else {
                    Ok(self.base + c)
                }
            })
            .collect()
    }
}

impl GinJudge for OracleJudge {
    fn column_names(&self) -> &[String] {
        &self.names
    }

    fn gin(&self, z: &[usize], y: &[usize], _purpose: &str) -> Result<(bool, f64)> {
        let zg = self.to_graph_indices(z)?;
        let yg = self.to_graph_indices(y)?;
        let (ok, _) = exact_gin(&self.graph, &zg, &yg)?;
        Ok((ok, if ok { 1.0 } else { 0.0 }))
    }

    fn dependent(&self, x: usize, others: &[usize]) -> Result<bool> {
        self.to_graph_indices(&[x])?;
        self.to_graph_indices(others)?;
        let sx = &self.supports[x];
        Ok(others.iter().any(|&o| !self.supports[o].is_disjoint(sx)))
    }
}

/// Identify causal clusters in sample data.
///
/// Returns the clusters along with the names of columns that never joined
/// one. Uses the [`ClusterContext::Full`] context.
pub fn find_clusters(
    data: &DataMatrix,
    config: &TestConfig,
) -> Result<(Vec<CausalCluster>, BTreeSet<String>)> {
    let judge = SampleJudge::new(data, config);
    find_clusters_with(&judge, ClusterContext::Full)
}

/// Identify causal clusters through an arbitrary judge.
///
/// Searches subsets of the unclustered pool by ascending latent dimension:
/// at dimension `d` every pool subset of size `d + 1` is tested for the GIN
/// condition against the context, and accepted subsets must also have every
/// member dependent on the rest of the context. Overlapping accepted
/// subsets merge into one cluster. The search stops when the pool can no
/// longer hold a subset of the next size plus a nonempty remainder.
pub fn find_clusters_with<J: GinJudge>(
    judge: &J,
    context: ClusterContext,
) -> Result<(Vec<CausalCluster>, BTreeSet<String>)> {
    let names = judge.column_names();
    let all: Vec<usize> = (0..names.len()).collect();
    let mut pool: BTreeSet<usize> = all.iter().copied().collect();
    let mut clusters: Vec<CausalCluster> = Vec::new();
    let mut dim = 1usize;

    while !pool.is_empty() && pool.len() > dim + 1 {
        let pool_vec: Vec<usize> = pool.iter().copied().collect();
        let mut accepted: Vec<BTreeSet<usize>> = Vec::new();
        for subset in combinations(&pool_vec, dim + 1) {
            let subset_set: BTreeSet<usize> = subset.iter().copied().collect();
            let z: Vec<usize> = match context {
                ClusterContext::Full => all
                    .iter()
                    .copied()
                    .filter(|c| !subset_set.contains(c))
                    .collect(),
                ClusterContext::Pool => pool_vec
                    .iter()
                    .copied()
                    .filter(|c| !subset_set.contains(c))
                    .collect(),
            };
            let purpose = format!("cluster candidate at dimension {dim}");
            let (satisfied, _) = judge.gin(&z, &subset, &purpose)?;
            if !satisfied {
                continue;
            }
            // Guard against vacuous acceptances: each member must carry
            // actual dependence on the rest of the context.
            let mut all_dependent = true;
            for &x in &subset {
                let others: Vec<usize> = match context {
                    ClusterContext::Full => {
                        all.iter().copied().filter(|&c| c != x).collect()
                    }
                    ClusterContext::Pool => {
                        pool_vec.iter().copied().filter(|&c| c != x).collect()
                    }
                };
                if !judge.dependent(x, &others)? {
                    all_dependent = false;
                    break;
                }
            }
            if all_dependent {
                accepted.push(subset_set);
            }
        }

        // Merge overlapping acceptances into maximal groups; the merged
        // group keeps this round's latent dimension.
        let mut groups: Vec<BTreeSet<usize>> = Vec::new();
        for sub in accepted {
            let (touching, rest): (Vec<_>, Vec<_>) =
                groups.into_iter().partition(|g| !g.is_disjoint(&sub));
            let mut merged = sub;
            for g in touching {
                merged.extend(g);
            }
            groups = rest;
            groups.push(merged);
        }
        groups.sort_by_key(|g| *g.iter().next().expect("groups are nonempty"));
        for group in groups {
            for c in &group {
                pool.remove(c);
            }
            clusters.push(CausalCluster {
                members: group.iter().map(|&c| names[c].clone()).collect(),
                latent_dim: dim,
            });
        }
        dim += 1;
    }

    let unclustered: BTreeSet<String> = pool.iter().map(|&c| names[c].clone()).collect();
    Ok((clusters, unclustered))
}

/// Split one cluster's sorted members into the two halves used by the
/// directional test and borrow the opposing cluster's leading members.
///
/// The first `dim` members (by column index) form the Y half and the next
/// `dim` the Z half; a cluster too small for two full halves splits evenly
/// with the Y half taking the extra member. The opposing cluster
/// contributes its first `other_dim` members to the Y side.
///
/// Returns `(z, y)`.
pub fn half_split_sets(
    members: &[usize],
    dim: usize,
    other: &[usize],
    other_dim: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if members.len() < 2 {
        return Err(Error::Argument(
            "directional splitting needs at least two cluster members".into(),
        ));
    }
    if dim == 0 || other_dim == 0 {
        return Err(Error::Argument(
            "cluster dimensions must be positive".into(),
        ));
    }
    if other.is_empty() {
        return Err(Error::Argument(
            "the opposing cluster must not be empty".into(),
        ));
    }
    let mut own = members.to_vec();
    own.sort_unstable();
    let (mut y, z) = split_halves(&own, dim);
    let mut opposing = other.to_vec();
    opposing.sort_unstable();
    opposing.truncate(other_dim);
    y.extend(opposing);
    Ok((z, y))
}

/// Y half then Z half of one sorted member list.
fn split_halves(sorted: &[usize], dim: usize) -> (Vec<usize>, Vec<usize>) {
    if sorted.len() >= 2 * dim {
        (sorted[..dim].to_vec(), sorted[dim..2 * dim].to_vec())
    } else {
        let take = sorted.len().div_ceil(2);
        (sorted[..take].to_vec(), sorted[take..].to_vec())
    }
}

fn member_columns(names: &[String], cluster: &CausalCluster) -> Result<Vec<usize>> {
    let index: BTreeMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    cluster
        .members
        .iter()
        .map(|m| {
            index.get(m.as_str()).copied().ok_or_else(|| {
                Error::Reference(format!("cluster member {m:?} is not a data column"))
            })
        })
        .collect()
}

/// Pick the causally earliest cluster among `candidates` on sample data.
pub fn find_root(
    data: &DataMatrix,
    candidates: &[CausalCluster],
    state: &RootSearchState,
    config: &TestConfig,
) -> Result<RootChoice> {
    let judge = SampleJudge::new(data, config);
    find_root_with(&judge, candidates, state)
}

/// Pick the causally earliest cluster among `candidates` through a judge.
///
/// Each candidate is tested against every other: the candidate's Y half
/// plus the other's leading members (plus accumulated Y columns) must pass
/// the GIN condition against the candidate's Z half (plus accumulated Z
/// columns). A candidate wins by passing every test; ties break toward the
/// largest worst-case p-value, then toward the earliest listed. When no
/// candidate passes everything the least-contradicted one is returned with
/// the low-confidence flag set. A sole candidate is returned untested.
pub fn find_root_with<J: GinJudge>(
    judge: &J,
    candidates: &[CausalCluster],
    state: &RootSearchState,
) -> Result<RootChoice> {
    if candidates.is_empty() {
        return Err(Error::Argument(
            "root search needs at least one candidate cluster".into(),
        ));
    }
    if candidates.len() == 1 {
        return Ok(RootChoice {
            index: 0,
            low_confidence: false,
        });
    }
    let names = judge.column_names();
    let columns: Vec<Vec<usize>> = candidates
        .iter()
        .map(|c| member_columns(names, c))
        .collect::<Result<_>>()?;

    let mut best_passing: Option<(usize, f64)> = None;
    let mut best_any = (0usize, f64::NEG_INFINITY);
    for i in 0..candidates.len() {
        let mut min_p = f64::INFINITY;
        let mut passes = true;
        for j in 0..candidates.len() {
            if j == i {
                continue;
            }
            let (mut z, mut y) = half_split_sets(
                &columns[i],
                candidates[i].latent_dim,
                &columns[j],
                candidates[j].latent_dim,
            )?;
            y.extend_from_slice(&state.y_half);
            z.extend_from_slice(&state.z_half);
            let purpose = format!("root candidate {i} tested toward cluster {j}");
            let (satisfied, p) = judge.gin(&z, &y, &purpose)?;
            min_p = min_p.min(p);
            if !satisfied {
                passes = false;
            }
        }
        if min_p > best_any.1 {
            best_any = (i, min_p);
        }
        if passes {
            let replace = match best_passing {
                Some((_, best_p)) => min_p > best_p,
                None => true,
            };
            if replace {
                best_passing = Some((i, min_p));
            }
        }
    }
    Ok(match best_passing {
        Some((index, _)) => RootChoice {
            index,
            low_confidence: false,
        },
        None => RootChoice {
            index: best_any.0,
            low_confidence: true,
        },
    })
}

/// Learn a full causal order over `clusters` on sample data.
pub fn learn_order(
    data: &DataMatrix,
    clusters: &[CausalCluster],
    config: &TestConfig,
) -> Result<CausalOrder> {
    let judge = SampleJudge::new(data, config);
    learn_order_with(&judge, clusters)
}

/// Learn a full causal order over `clusters` through a judge.
///
/// Repeatedly extracts the root among the remaining clusters, folding each
/// extracted root's member halves into the accumulated state so later
/// rounds stay directionally informed.
pub fn learn_order_with<J: GinJudge>(
    judge: &J,
    clusters: &[CausalCluster],
) -> Result<CausalOrder> {
    let names = judge.column_names();
    let mut pending: Vec<usize> = (0..clusters.len()).collect();
    let mut state = RootSearchState::default();
    let mut sequence = Vec::with_capacity(clusters.len());
    let mut low_confidence = false;

    while !pending.is_empty() {
        let candidates: Vec<CausalCluster> =
            pending.iter().map(|&i| clusters[i].clone()).collect();
        let choice = find_root_with(judge, &candidates, &state)?;
        let original = pending[choice.index];
        low_confidence |= choice.low_confidence;

        let cols = member_columns(names, &clusters[original])?;
        let mut sorted = cols;
        sorted.sort_unstable();
        let (y_own, z_own) = split_halves(&sorted, clusters[original].latent_dim);
        state.y_half.extend(y_own);
        state.z_half.extend(z_own);
        state.resolved.push(original);

        sequence.push(original);
        pending.remove(choice.index);
    }

    Ok(CausalOrder {
        sequence,
        low_confidence,
    })
}

/// Run the full discovery pipeline: cluster search followed by order
/// learning, with every executed test on the record.
pub fn discover(data: &DataMatrix, config: &TestConfig) -> Result<DiscoveryResult> {
    let judge = SampleJudge::new(data, config);
    let (clusters, unclustered) = find_clusters_with(&judge, ClusterContext::Full)?;
    let order = learn_order_with(&judge, &clusters)?;
    let trace = judge.into_trace();
    Ok(DiscoveryResult {
        clusters,
        order,
        unclustered,
        trace,
    })
}
