//! Exact decision procedures evaluated on a declared model rather than on
//! samples: noise-mixing algebra, the model-implied covariance, independence
//! verdicts certified by noise supports, d-separation, exogenous-set checks,
//! and the graphical rank-witness criterion.
//!
//! Every verdict here is deterministic. Numerical thresholds separate exact
//! zeros (which these computations produce up to rounding) from genuine
//! magnitudes; anything caught between the two bands is reported as
//! ambiguous rather than silently resolved.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::LingLamGraph;

/// Magnitudes at or below this level count as exact zeros when reading noise
/// loadings and annihilated residuals.
const SUPPORT_FLOOR: f64 = 1e-9;
/// Magnitudes above the floor but at or below this level are neither clear
/// zeros nor clear loadings; verdicts that depend on them are flagged.
const AMBIGUOUS_CEILING: f64 = 1e-6;
/// Relative singular-value cutoff for rank and null-space decisions.
const RANK_TOLERANCE: f64 = 1e-8;
/// Relative band above the rank cutoff that still counts as a near-tie.
const RANK_AMBIGUOUS: f64 = 1e-5;
/// Largest latent count accepted by the witness-enumerating criterion.
const MAX_WITNESS_LATENTS: usize = 8;

/// Loadings of every independent noise term on every variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    /// Row `v`, column `k`: total path weight from the noise of variable `k`
    /// into variable `v`. The diagonal is 1.
    pub matrix: DMatrix<f64>,
}

/// Model-implied covariance over all declared variables.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationCov {
    /// Covariance in declaration order (latents first, then observed).
    pub sigma: DMatrix<f64>,
}

impl PopulationCov {
    /// Copies the submatrix with the given row and column variable indices.
    pub fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
            self.sigma[(rows[i], cols[j])]
        })
    }

    /// Covariance restricted to the observed variables of `g`.
    pub fn observed_block(&self, g: &LingLamGraph) -> DMatrix<f64> {
        let obs: Vec<usize> = (g.n_latents()..g.n_total()).collect();
        self.block(&obs, &obs)
    }
}

/// Evidence accompanying an exact independence verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GinCertificate {
    /// Global indices of noise terms that some annihilating direction still
    /// loads on while the conditioning side loads on them too.
    pub shared_noise: BTreeSet<usize>,
    /// True when no annihilating direction exists at all.
    pub trivial_null: bool,
    /// True when a magnitude fell between the exact-zero floor and the
    /// clearly-nonzero ceiling, so the verdict should not be trusted.
    pub ambiguous: bool,
}

/// Computes the noise-to-variable loading matrix by substituting each
/// parent's loadings along the declared causal order.
pub fn mixing_matrix(g: &LingLamGraph) -> Result<MixingMatrix> {
    let n = g.n_total();
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; n]; n];
    for &v in g.causal_order() {
        let mut acc = vec![0.0; n];
        for p in g.parents_of(v) {
            let w = g.coefficient(v, p);
            for (slot, parent_load) in acc.iter_mut().zip(&rows[p]) {
                *slot += w * parent_load;
            }
        }
        acc[v] += 1.0;
        rows[v] = acc;
    }
    let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(MixingMatrix { matrix })
}

/// Computes the model-implied covariance from the mixing rows and the
/// declared noise variances.
pub fn population_covariance(g: &LingLamGraph) -> Result<PopulationCov> {
    let m = mixing_matrix(g)?;
    let n = g.n_total();
    let noise_var: Vec<f64> = g.noise_specs().iter().map(|s| s.variance()).collect();
    let mut sigma = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = 0.0;
            for (k, var) in noise_var.iter().enumerate() {
                acc += m.matrix[(i, k)] * var * m.matrix[(j, k)];
            }
            sigma[(i, j)] = acc;
            sigma[(j, i)] = acc;
        }
    }
    Ok(PopulationCov { sigma })
}

fn check_in_range(g: &LingLamGraph, what: &str, idx: &[usize]) -> Result<()> {
    for &i in idx {
        if i >= g.n_total() {
            return Err(Error::Reference(format!(
                "{what} index {i} out of range for {} variables",
                g.n_total()
            )));
        }
    }
    Ok(())
}

fn check_distinct(what: &str, idx: &[usize]) -> Result<()> {
    let set: BTreeSet<usize> = idx.iter().copied().collect();
    if set.len() != idx.len() {
        return Err(Error::Argument(format!("{what} indices must be distinct")));
    }
    Ok(())
}

fn check_disjoint(what: &str, a: &[usize], b: &[usize]) -> Result<()> {
    let set: BTreeSet<usize> = a.iter().copied().collect();
    if b.iter().any(|v| set.contains(v)) {
        return Err(Error::Argument(format!("{what} must be disjoint")));
    }
    Ok(())
}

/// Union of the noise supports of the given mixing rows.
pub(crate) fn support_of_rows(m: &DMatrix<f64>, rows: &[usize]) -> BTreeSet<usize> {
    let mut support = BTreeSet::new();
    for &r in rows {
        for k in 0..m.ncols() {
            if m[(r, k)].abs() > SUPPORT_FLOOR {
                support.insert(k);
            }
        }
    }
    support
}

/// Eigen directions of `m * m^T` together with the annihilation error each
/// direction actually achieves on `m`, i.e. `||v^T m||`.
///
/// Recomputing the achieved error (instead of trusting the square root of
/// the eigenvalue) keeps exact null directions many orders of magnitude
/// below the rank cutoff.
fn left_directions(m: &DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let rows = m.nrows();
    let gram = m * m.transpose();
    let eig = gram.symmetric_eigen();
    (0..rows)
        .map(|i| {
            let v: Vec<f64> = (0..rows).map(|r| eig.eigenvectors[(r, i)]).collect();
            let mut achieved = 0.0f64;
            for c in 0..m.ncols() {
                let mut dot = 0.0;
                for (r, w) in v.iter().enumerate() {
                    dot += w * m[(r, c)];
                }
                achieved += dot * dot;
            }
            (achieved.sqrt(), v)
        })
        .collect()
}

/// Exact verdict and certificate for one annihilating direction set.
///
/// `basis` spans the directions that annihilate the cross-covariance; the
/// combination they form over the `y` mixing rows must not load on any noise
/// term the `z` rows load on.
fn certify_basis(
    mixing: &DMatrix<f64>,
    y: &[usize],
    basis: &[Vec<f64>],
    s_z: &BTreeSet<usize>,
    mut ambiguous: bool,
) -> (bool, GinCertificate) {
    let trivial_null = basis.is_empty();
    let mut shared_noise = BTreeSet::new();
    for omega in basis {
        for &k in s_z {
            let mut r = 0.0;
            for (w, &row) in omega.iter().zip(y) {
                r += w * mixing[(row, k)];
            }
            let mag = r.abs();
            if mag > AMBIGUOUS_CEILING {
                shared_noise.insert(k);
            } else if mag > SUPPORT_FLOOR {
                shared_noise.insert(k);
                ambiguous = true;
            }
        }
    }
    let ok = !trivial_null && shared_noise.is_empty();
    (
        ok,
        GinCertificate {
            shared_noise,
            trivial_null,
            ambiguous,
        },
    )
}

/// Decides exactly whether every combination of the `y` variables that
/// annihilates their cross-covariance with the `z` variables is independent
/// of all of them, by checking shared noise supports.
///
/// Returns the verdict along with a certificate naming the shared noise
/// terms. The verdict requires at least one annihilating direction to
/// exist; when none does the certificate sets `trivial_null`.
pub fn exact_gin(
    g: &LingLamGraph,
    z: &[usize],
    y: &[usize],
) -> Result<(bool, GinCertificate)> {
    if y.is_empty() || z.is_empty() {
        return Err(Error::Argument(
            "exact independence check requires nonempty Y and Z".into(),
        ));
    }
    check_in_range(g, "Y", y)?;
    check_in_range(g, "Z", z)?;
    check_distinct("Y", y)?;
    check_distinct("Z", z)?;
    check_disjoint("Y and Z", y, z)?;

    let mixing = mixing_matrix(g)?;
    let pop = population_covariance(g)?;
    let sigma_yz = pop.block(y, z);
    let directions = left_directions(&sigma_yz);
    let sigma_max = directions.iter().map(|(s, _)| *s).fold(0.0, f64::max);

    let mut ambiguous = false;
    let basis: Vec<Vec<f64>> = if sigma_max <= RANK_TOLERANCE {
        // The cross-covariance block vanishes: every direction annihilates
        // it, so check the raw mixing rows themselves.
        (0..y.len())
            .map(|i| {
                let mut e = vec![0.0; y.len()];
                e[i] = 1.0;
                e
            })
            .collect()
    } else {
        let cutoff = RANK_TOLERANCE * sigma_max;
        let near = RANK_AMBIGUOUS * sigma_max;
        ambiguous = directions.iter().any(|(s, _)| *s > cutoff && *s <= near);
        directions
            .iter()
            .filter(|(s, _)| *s <= cutoff)
            .map(|(_, v)| v.clone())
            .collect()
    };

    let s_z = support_of_rows(&mixing.matrix, z);
    Ok(certify_basis(&mixing.matrix, y, &basis, &s_z, ambiguous))
}

/// Decides exactly whether the residual of the best linear prediction of
/// `y` from the `z` variables is independent of all of them.
///
/// The regression residual always exists, so the certificate never sets
/// `trivial_null`; the verdict is purely a shared-support check.
pub fn exact_in(g: &LingLamGraph, z: &[usize], y: usize) -> Result<(bool, GinCertificate)> {
    if z.is_empty() {
        return Err(Error::Argument(
            "exact residual check requires a nonempty Z".into(),
        ));
    }
    check_in_range(g, "Z", z)?;
    check_in_range(g, "Y", &[y])?;
    check_distinct("Z", z)?;
    check_disjoint("Y and Z", &[y], z)?;

    let mixing = mixing_matrix(g)?;
    let pop = population_covariance(g)?;
    let szz = pop.block(z, z);
    let szy = pop.block(z, &[y]);
    let eig = szz.symmetric_eigen();
    let max_l = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let min_l = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(max_l > 0.0) || min_l <= 1e-12 * max_l {
        return Err(Error::Numerical(
            "conditioning variables are collinear at the population level".into(),
        ));
    }
    // Regression weights via the eigendecomposition of the Z covariance.
    let nz = z.len();
    let mut weights = vec![0.0f64; nz];
    for i in 0..nz {
        let mut proj = 0.0;
        for r in 0..nz {
            proj += eig.eigenvectors[(r, i)] * szy[(r, 0)];
        }
        let scale = proj / eig.eigenvalues[i];
        for (r, w) in weights.iter_mut().enumerate() {
            *w += scale * eig.eigenvectors[(r, i)];
        }
    }

    let s_z = support_of_rows(&mixing.matrix, z);
    let mut shared_noise = BTreeSet::new();
    let mut ambiguous = false;
    for &k in &s_z {
        let mut r = mixing.matrix[(y, k)];
        for (&w, &zr) in weights.iter().zip(z) {
            r -= w * mixing.matrix[(zr, k)];
        }
        let mag = r.abs();
        if mag > AMBIGUOUS_CEILING {
            shared_noise.insert(k);
        } else if mag > SUPPORT_FLOOR {
            shared_noise.insert(k);
            ambiguous = true;
        }
    }
    let ok = shared_noise.is_empty();
    Ok((
        ok,
        GinCertificate {
            shared_noise,
            trivial_null: false,
            ambiguous,
        },
    ))
}

/// Decides exactly whether some combination of `y` and the `z` variables
/// themselves is annihilated on every noise term the `z` variables load on.
///
/// This is the existence form of the check: it succeeds as soon as the
/// stacked mixing rows, restricted to the conditioning support, are rank
/// deficient. `y` and `z` must be disjoint — duplicated rows would fabricate
/// annihilating directions that carry no information.
pub fn exact_gin_augmented(
    g: &LingLamGraph,
    z: &[usize],
    y: &[usize],
) -> Result<(bool, GinCertificate)> {
    if y.is_empty() || z.is_empty() {
        return Err(Error::Argument(
            "augmented check requires nonempty Y and Z".into(),
        ));
    }
    check_in_range(g, "Y", y)?;
    check_in_range(g, "Z", z)?;
    check_distinct("Y", y)?;
    check_distinct("Z", z)?;
    check_disjoint("Y and Z", y, z)?;

    let mixing = mixing_matrix(g)?;
    let rows: Vec<usize> = y.iter().chain(z.iter()).copied().collect();
    let s_z = support_of_rows(&mixing.matrix, z);
    let cols: Vec<usize> = s_z.iter().copied().collect();
    let restricted = DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        mixing.matrix[(rows[i], cols[j])]
    });
    let directions = left_directions(&restricted);
    // Own-noise entries of the z rows guarantee a nonzero scale here.
    let sigma_max = directions.iter().map(|(s, _)| *s).fold(0.0, f64::max);
    let cutoff = RANK_TOLERANCE * sigma_max;
    let near = RANK_AMBIGUOUS * sigma_max;
    let ambiguous = directions.iter().any(|(s, _)| *s > cutoff && *s <= near);
    let basis: Vec<Vec<f64>> = directions
        .iter()
        .filter(|(s, _)| *s <= cutoff)
        .map(|(_, v)| v.clone())
        .collect();
    let ok = !basis.is_empty();
    let mut shared_noise = BTreeSet::new();
    if !ok {
        // Name the blockers: support coordinates the least-loaded direction
        // still carries.
        if let Some((_, v)) = directions
            .iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite singular values"))
        {
            for (j, &k) in cols.iter().enumerate() {
                let mut r = 0.0;
                for (ri, w) in v.iter().enumerate() {
                    r += w * restricted[(ri, j)];
                }
                if r.abs() > AMBIGUOUS_CEILING {
                    shared_noise.insert(k);
                }
            }
        }
    }
    Ok((
        ok,
        GinCertificate {
            shared_noise,
            trivial_null: !ok,
            ambiguous,
        },
    ))
}

/// Children adjacency derived from the coefficient matrix.
fn children_lists(g: &LingLamGraph) -> Vec<Vec<usize>> {
    let n = g.n_total();
    let mut children = vec![Vec::new(); n];
    for c in 0..n {
        for p in g.parents_of(c) {
            children[p].push(c);
        }
    }
    children
}

/// Nodes with a directed path into any seed (the seeds excluded).
fn proper_ancestors(g: &LingLamGraph, seeds: &[usize]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    for &s in seeds {
        stack.extend(g.parents_of(s));
    }
    while let Some(v) = stack.pop() {
        if out.insert(v) {
            stack.extend(g.parents_of(v));
        }
    }
    out
}

/// Nodes reachable from any seed along directed edges (seeds excluded).
fn proper_descendants(children: &[Vec<usize>], seeds: &[usize]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    for &s in seeds {
        stack.extend(children[s].iter().copied());
    }
    while let Some(v) = stack.pop() {
        if out.insert(v) {
            stack.extend(children[v].iter().copied());
        }
    }
    out
}

/// Tests whether every trail between `xs` and `ys` is blocked by `zs`,
/// using the standard reachability procedure over trail states.
pub fn d_separated(g: &LingLamGraph, xs: &[usize], ys: &[usize], zs: &[usize]) -> Result<bool> {
    check_in_range(g, "X", xs)?;
    check_in_range(g, "Y", ys)?;
    check_in_range(g, "Z", zs)?;
    check_disjoint("X and Y", xs, ys)?;
    check_disjoint("X and Z", xs, zs)?;
    check_disjoint("Y and Z", ys, zs)?;

    let n = g.n_total();
    let children = children_lists(g);
    let mut in_z = vec![false; n];
    for &v in zs {
        in_z[v] = true;
    }
    let mut in_y = vec![false; n];
    for &v in ys {
        in_y[v] = true;
    }
    // Conditioning set plus everything upstream of it: colliders in this set
    // pass the trail through.
    let mut an_z = in_z.clone();
    for v in proper_ancestors(g, zs) {
        an_z[v] = true;
    }

    // State: (node, arrived-moving-upstream). Visiting a node in either
    // direction with an active trail decides connectivity.
    let mut visited = vec![[false; 2]; n];
    let mut stack: Vec<(usize, bool)> = xs.iter().map(|&x| (x, true)).collect();
    while let Some((v, up)) = stack.pop() {
        let slot = usize::from(up);
        if visited[v][slot] {
            continue;
        }
        visited[v][slot] = true;
        if in_y[v] {
            return Ok(false);
        }
        if up {
            if !in_z[v] {
                stack.extend(g.parents_of(v).into_iter().map(|p| (p, true)));
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
        } else {
            if !in_z[v] {
                stack.extend(children[v].iter().map(|&c| (c, false)));
            }
            if an_z[v] {
                stack.extend(g.parents_of(v).into_iter().map(|p| (p, true)));
            }
        }
    }
    Ok(true)
}

/// Tests whether `set` is exogenous relative to `relative_to`: no member of
/// `relative_to` outside `set` feeds back into `set`, and any common driver
/// of such a member and a `set` member already lies inside `set`.
pub fn is_exogenous_set(
    g: &LingLamGraph,
    set: &[usize],
    relative_to: &[usize],
) -> Result<bool> {
    check_in_range(g, "set", set)?;
    check_in_range(g, "relative set", relative_to)?;
    let s1: BTreeSet<usize> = set.iter().copied().collect();
    let s2: BTreeSet<usize> = relative_to.iter().copied().collect();
    if s2.is_subset(&s1) {
        return Ok(true);
    }
    let children = children_lists(g);
    let member_ancestors: Vec<BTreeSet<usize>> = set
        .iter()
        .map(|&u| proper_ancestors(g, &[u]))
        .collect();
    for &v in s2.difference(&s1) {
        let reach = proper_descendants(&children, &[v]);
        if set.iter().any(|u| reach.contains(u)) {
            return Ok(false);
        }
        let anc_v = proper_ancestors(g, &[v]);
        for anc_u in &member_ancestors {
            if anc_v.intersection(anc_u).any(|w| !s1.contains(w)) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Lexicographic `k`-subsets of `items`, preserving the given order.
pub(crate) fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    if k == 0 {
        out.push(Vec::new());
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let mut i = k;
        let advanced = loop {
            if i == 0 {
                break false;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break true;
            }
        };
        if !advanced {
            return out;
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Effective rank of a covariance block under the shared relative cutoff.
fn effective_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let directions = left_directions(m);
    let sigma_max = directions.iter().map(|(s, _)| *s).fold(0.0, f64::max);
    if sigma_max <= RANK_TOLERANCE {
        return 0;
    }
    let cutoff = RANK_TOLERANCE * sigma_max;
    directions.iter().filter(|(s, _)| *s > cutoff).count()
}

/// Searches for a latent subset that renders `y` and `z` conditionally
/// independent while carrying matching effective ranks on both sides.
///
/// Returns the first witness in size-ascending, then lexicographic, order.
/// Restricted to models with at most eight latents because the search
/// enumerates latent subsets.
pub fn graphical_gin(
    g: &LingLamGraph,
    z: &[usize],
    y: &[usize],
) -> Result<(bool, Option<Vec<usize>>)> {
    if g.n_latents() > MAX_WITNESS_LATENTS {
        return Err(Error::Unsupported(format!(
            "witness enumeration over {} latents exceeds the supported limit of {}",
            g.n_latents(),
            MAX_WITNESS_LATENTS
        )));
    }
    if y.is_empty() || z.is_empty() {
        return Err(Error::Argument(
            "graphical check requires nonempty Y and Z".into(),
        ));
    }
    check_in_range(g, "Y", y)?;
    check_in_range(g, "Z", z)?;
    check_distinct("Y", y)?;
    check_distinct("Z", z)?;
    check_disjoint("Y and Z", y, z)?;

    let pop = population_covariance(g)?;
    let mut latent_parents: BTreeSet<usize> = BTreeSet::new();
    for &v in y {
        for p in g.parents_of(v) {
            if p < g.n_latents() {
                latent_parents.insert(p);
            }
        }
    }
    let l_y: Vec<usize> = latent_parents.into_iter().collect();
    let excluded: BTreeSet<usize> = y.iter().chain(z.iter()).copied().collect();
    let latents: Vec<usize> = (0..g.n_latents()).collect();
    let k_max = z.len().min(y.len().saturating_sub(1));
    for k in 0..=k_max {
        for s in combinations(&latents, k) {
            if s.iter().any(|v| excluded.contains(v)) {
                continue;
            }
            if !is_exogenous_set(g, &s, &l_y)? {
                continue;
            }
            if !d_separated(g, y, z, &s)? {
                continue;
            }
            if effective_rank(&pop.block(&s, z)) != k {
                continue;
            }
            if effective_rank(&pop.block(&s, y)) != k {
                continue;
            }
            return Ok((true, Some(s)));
        }
    }
    Ok((false, None))
}
