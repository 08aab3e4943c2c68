//! Linear non-Gaussian latent-variable graph model.
//!
//! A [`LingLamGraph`] is a directed acyclic graph over latent and observed
//! variables with linear edge coefficients and a non-Gaussian noise law per
//! variable. Latent variables occupy global indices `0..n_latents`, observed
//! variables follow. The coefficient matrix is indexed `(child, parent)`.
//!
//! Construction enforces structural well-formedness (dimensions, unique
//! names, acyclicity via the declared causal order). The modelling
//! assumptions — no observed-to-latent edges, no observed-to-observed edges,
//! and enough pure measurement children per latent group — are *reported* by
//! [`LingLamGraph::validate_model`], never enforced at construction, so that
//! deliberately broken structures remain analyzable.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::NoiseSpec;

/// Whether a variable is latent (unmeasured) or observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Latent,
    Observed,
}

/// A named variable together with its kind.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

/// The modelling assumptions checked by [`LingLamGraph::validate_model`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assumption {
    /// An observed variable is a parent of a latent variable.
    LatentCausedByObserved,
    /// A maximal group of latents sharing one observed-child set has fewer
    /// than twice the group size in pure measurement children.
    InsufficientPureChildren,
    /// An observed variable is a parent of another observed variable.
    ObservedCausesObserved,
}

/// One violation report: the assumption broken and the variables involved.
#[derive(Clone, Debug)]
pub struct Violation {
    pub assumption: Assumption,
    pub variables: Vec<String>,
}

/// A set of observed variables sharing one latent parent set, together with
/// the dimension of that latent set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalCluster {
    pub members: BTreeSet<String>,
    pub latent_dim: usize,
}

/// Immutable linear non-Gaussian latent-variable model.
#[derive(Clone, Debug)]
pub struct LingLamGraph {
    variables: Vec<Variable>,
    n_latents: usize,
    coef: DMatrix<f64>,
    noise: Vec<NoiseSpec>,
    order: Vec<usize>,
    index: BTreeMap<String, usize>,
}

/// On-disk JSON layout (`schema_version` 1).
#[derive(Serialize, Deserialize)]
struct GraphDoc {
    schema_version: u32,
    variables: Vec<Variable>,
    edges: Vec<EdgeDoc>,
    noise: Vec<NoiseDoc>,
    order: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    coef: f64,
}

#[derive(Serialize, Deserialize)]
struct NoiseDoc {
    var: String,
    #[serde(flatten)]
    spec: NoiseSpec,
}

impl LingLamGraph {
    /// Build a graph from latent names, observed names, a `(child, parent)`
    /// coefficient matrix over the combined index space, one noise law per
    /// variable, and a causal order (a permutation of global indices).
    ///
    /// Fails when dimensions disagree, names collide, the order is not a
    /// permutation, or some nonzero coefficient points against the order
    /// (which covers all cycles).
    pub fn new(
        latent_names: Vec<String>,
        observed_names: Vec<String>,
        coef: DMatrix<f64>,
        noise: Vec<NoiseSpec>,
        order: Vec<usize>,
    ) -> Result<Self> {
        let n_latents = latent_names.len();
        let total = n_latents + observed_names.len();
        if coef.nrows() != total || coef.ncols() != total {
            return Err(Error::Structure(format!(
                "coefficient matrix is {}x{}, expected {total}x{total}",
                coef.nrows(),
                coef.ncols()
            )));
        }
        if noise.len() != total {
            return Err(Error::Structure(format!(
                "{} noise specs for {total} variables",
                noise.len()
            )));
        }
        if order.len() != total {
            return Err(Error::Structure(format!(
                "causal order has {} entries for {total} variables",
                order.len()
            )));
        }
        let mut seen = vec![false; total];
        for &v in &order {
            if v >= total || seen[v] {
                return Err(Error::Structure(
                    "causal order is not a permutation of the variable indices".into(),
                ));
            }
            seen[v] = true;
        }
        for spec in &noise {
            spec.validate()?;
        }

        let variables: Vec<Variable> = latent_names
            .into_iter()
            .map(|name| Variable {
                name,
                kind: VarKind::Latent,
            })
            .chain(observed_names.into_iter().map(|name| Variable {
                name,
                kind: VarKind::Observed,
            }))
            .collect();

        let mut index = BTreeMap::new();
        for (i, v) in variables.iter().enumerate() {
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::Structure(format!(
                    "duplicate variable name {:?}",
                    v.name
                )));
            }
        }

        let mut position = vec![0usize; total];
        for (pos, &v) in order.iter().enumerate() {
            position[v] = pos;
        }
        for child in 0..total {
            for parent in 0..total {
                if coef[(child, parent)] != 0.0 && position[parent] >= position[child] {
                    return Err(Error::Structure(format!(
                        "edge {} -> {} contradicts the causal order",
                        variables[parent].name, variables[child].name
                    )));
                }
            }
        }

        Ok(LingLamGraph {
            variables,
            n_latents,
            coef,
            noise,
            order,
            index,
        })
    }

    pub fn n_latents(&self) -> usize {
        self.n_latents
    }

    pub fn n_observed(&self) -> usize {
        self.variables.len() - self.n_latents
    }

    pub fn n_total(&self) -> usize {
        self.variables.len()
    }

    /// The variable at a global index. Panics when out of range.
    pub fn variable(&self, i: usize) -> &Variable {
        &self.variables[i]
    }

    /// Global index of a variable name.
    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Reference(format!("no variable named {name:?}")))
    }

    /// Edge coefficient for `parent -> child`, zero when absent.
    pub fn coefficient(&self, child: usize, parent: usize) -> f64 {
        self.coef[(child, parent)]
    }

    /// A copy of the full `(child, parent)` coefficient matrix.
    pub fn coefficients(&self) -> DMatrix<f64> {
        self.coef.clone()
    }

    /// The causal order as a permutation of global indices, earliest first.
    pub fn causal_order(&self) -> &[usize] {
        &self.order
    }

    /// Noise law of each variable, indexed globally.
    pub fn noise_specs(&self) -> &[NoiseSpec] {
        &self.noise
    }

    /// Global indices of all parents of `child` (nonzero coefficient row).
    pub fn parents_of(&self, child: usize) -> Vec<usize> {
        (0..self.n_total())
            .filter(|&p| self.coef[(child, p)] != 0.0)
            .collect()
    }

    /// A new graph with the edge `parent -> child` set to `weight`.
    ///
    /// The edit is validated against the existing causal order, so edits that
    /// would create a cycle are rejected.
    pub fn with_edge(&self, parent: usize, child: usize, weight: f64) -> Result<Self> {
        let total = self.n_total();
        if parent >= total || child >= total {
            return Err(Error::Reference(format!(
                "edge endpoints ({parent}, {child}) outside 0..{total}"
            )));
        }
        let mut coef = self.coef.clone();
        coef[(child, parent)] = weight;
        let latent_names = self.variables[..self.n_latents]
            .iter()
            .map(|v| v.name.clone())
            .collect();
        let observed_names = self.variables[self.n_latents..]
            .iter()
            .map(|v| v.name.clone())
            .collect();
        LingLamGraph::new(
            latent_names,
            observed_names,
            coef,
            self.noise.clone(),
            self.order.clone(),
        )
    }

    /// All observed variables with at least one direct parent in
    /// `latent_set`. Every entry of `latent_set` must be a latent index.
    pub fn children_of(&self, latent_set: &[usize]) -> Result<Vec<usize>> {
        for &l in latent_set {
            if l >= self.n_total() {
                return Err(Error::Reference(format!(
                    "variable index {l} outside 0..{}",
                    self.n_total()
                )));
            }
            if l >= self.n_latents {
                return Err(Error::Argument(format!(
                    "{} is observed, not latent",
                    self.variables[l].name
                )));
            }
        }
        let kids: Vec<usize> = (self.n_latents..self.n_total())
            .filter(|&x| latent_set.iter().any(|&l| self.coef[(x, l)] != 0.0))
            .collect();
        Ok(kids)
    }

    /// Check the modelling assumptions and report every violation.
    ///
    /// Checks, in order: observed parents of latents, pure-measurement-child
    /// counts per latent group, and observed-to-observed edges. An empty
    /// report means the graph is a faithful instance of the model family.
    pub fn validate_model(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let nl = self.n_latents;
        let total = self.n_total();

        // Observed parent of a latent child.
        for child in 0..nl {
            for parent in nl..total {
                if self.coef[(child, parent)] != 0.0 {
                    out.push(Violation {
                        assumption: Assumption::LatentCausedByObserved,
                        variables: vec![
                            self.variables[parent].name.clone(),
                            self.variables[child].name.clone(),
                        ],
                    });
                }
            }
        }

        // Group observed variables by their exact latent-parent set. Each
        // set of size k must have at least 2k members measuring it purely,
        // and every latent must be measured by at least one such set.
        let mut groups: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
        for x in nl..total {
            let parents: BTreeSet<usize> =
                (0..nl).filter(|&l| self.coef[(x, l)] != 0.0).collect();
            if !parents.is_empty() {
                *groups.entry(parents).or_default() += 1;
            }
        }
        for (parent_set, members) in &groups {
            if *members < 2 * parent_set.len() {
                out.push(Violation {
                    assumption: Assumption::InsufficientPureChildren,
                    variables: parent_set
                        .iter()
                        .map(|&l| self.variables[l].name.clone())
                        .collect(),
                });
            }
        }
        for l in 0..nl {
            if !groups.keys().any(|set| set.contains(&l)) {
                out.push(Violation {
                    assumption: Assumption::InsufficientPureChildren,
                    variables: vec![self.variables[l].name.clone()],
                });
            }
        }

        // Observed-to-observed edges.
        for child in nl..total {
            for parent in nl..total {
                if self.coef[(child, parent)] != 0.0 {
                    out.push(Violation {
                        assumption: Assumption::ObservedCausesObserved,
                        variables: vec![
                            self.variables[parent].name.clone(),
                            self.variables[child].name.clone(),
                        ],
                    });
                }
            }
        }

        out
    }

    /// Partition the observed variables into groups with identical latent
    /// parent sets, ordered by that parent set (lexicographically on sorted
    /// indices).
    ///
    /// Fails when the partition is undefined: an observed variable with no
    /// latent parent, or one with an observed parent.
    pub fn true_clusters(&self) -> Result<Vec<CausalCluster>> {
        let nl = self.n_latents;
        let total = self.n_total();
        let mut groups: BTreeMap<BTreeSet<usize>, BTreeSet<String>> = BTreeMap::new();
        for x in nl..total {
            let mut latents = BTreeSet::new();
            for p in 0..total {
                if self.coef[(x, p)] == 0.0 {
                    continue;
                }
                if p >= nl {
                    return Err(Error::Structure(format!(
                        "observed variable {} has an observed parent; clusters are undefined",
                        self.variables[x].name
                    )));
                }
                latents.insert(p);
            }
            if latents.is_empty() {
                return Err(Error::Structure(format!(
                    "observed variable {} has no latent parent; clusters are undefined",
                    self.variables[x].name
                )));
            }
            groups
                .entry(latents)
                .or_default()
                .insert(self.variables[x].name.clone());
        }
        Ok(groups
            .into_iter()
            .map(|(latents, members)| CausalCluster {
                members,
                latent_dim: latents.len(),
            })
            .collect())
    }

    /// Latent parent sets of the clusters returned by
    /// [`LingLamGraph::true_clusters`], in the same order.
    pub fn true_cluster_latents(&self) -> Result<Vec<BTreeSet<usize>>> {
        let nl = self.n_latents;
        let total = self.n_total();
        let mut keys = BTreeSet::new();
        for x in nl..total {
            let latents: BTreeSet<usize> = (0..nl)
                .filter(|&p| self.coef[(x, p)] != 0.0)
                .collect();
            keys.insert(latents);
        }
        Ok(keys.into_iter().collect())
    }

    /// Serialize to the JSON document layout (schema_version 1).
    pub fn to_json_string(&self) -> Result<String> {
        let mut edges = Vec::new();
        for child in 0..self.n_total() {
            for parent in 0..self.n_total() {
                let c = self.coef[(child, parent)];
                if c != 0.0 {
                    edges.push(EdgeDoc {
                        from: self.variables[parent].name.clone(),
                        to: self.variables[child].name.clone(),
                        coef: c,
                    });
                }
            }
        }
        let doc = GraphDoc {
            schema_version: 1,
            variables: self.variables.clone(),
            edges,
            noise: self
                .variables
                .iter()
                .zip(&self.noise)
                .map(|(v, spec)| NoiseDoc {
                    var: v.name.clone(),
                    spec: spec.clone(),
                })
                .collect(),
            order: self.order.iter().map(|&i| self.variables[i].name.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Rebuild a graph from its JSON document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        if doc.schema_version != 1 {
            return Err(Error::Data(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        let mut latent_names = Vec::new();
        let mut observed_names = Vec::new();
        for v in &doc.variables {
            match v.kind {
                VarKind::Latent => {
                    if !observed_names.is_empty() {
                        return Err(Error::Data(
                            "latent variables must precede observed variables".into(),
                        ));
                    }
                    latent_names.push(v.name.clone());
                }
                VarKind::Observed => observed_names.push(v.name.clone()),
            }
        }
        let total = doc.variables.len();
        let lookup: BTreeMap<&str, usize> = doc
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.name.as_str(), i))
            .collect();
        let resolve = |name: &str| -> Result<usize> {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| Error::Data(format!("JSON references unknown variable {name:?}")))
        };
        let mut coef = DMatrix::<f64>::zeros(total, total);
        for e in &doc.edges {
            coef[(resolve(&e.to)?, resolve(&e.from)?)] = e.coef;
        }
        if doc.noise.len() != total {
            return Err(Error::Data(format!(
                "{} noise entries for {total} variables",
                doc.noise.len()
            )));
        }
        let mut noise: Vec<Option<NoiseSpec>> = vec![None; total];
        for nd in &doc.noise {
            noise[resolve(&nd.var)?] = Some(nd.spec.clone());
        }
        let noise: Vec<NoiseSpec> = noise
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| {
                    Error::Data(format!(
                        "no noise entry for variable {:?}",
                        doc.variables[i].name
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let order: Vec<usize> = doc
            .order
            .iter()
            .map(|n| resolve(n))
            .collect::<Result<_>>()?;
        LingLamGraph::new(latent_names, observed_names, coef, noise, order)
    }

    /// DOT rendering: latents as circles, observed variables as boxes.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph model {\n  rankdir=LR;\n");
        for v in &self.variables {
            let shape = match v.kind {
                VarKind::Latent => "circle",
                VarKind::Observed => "box",
            };
            let _ = writeln!(out, "  \"{}\" [shape={shape}];", v.name);
        }
        for child in 0..self.n_total() {
            for parent in 0..self.n_total() {
                let c = self.coef[(child, parent)];
                if c != 0.0 {
                    let _ = writeln!(
                        out,
                        "  \"{}\" -> \"{}\" [label=\"{c:.2}\"];",
                        self.variables[parent].name, self.variables[child].name
                    );
                }
            }
        }
        out.push_str("}\n");
        out
    }
}
