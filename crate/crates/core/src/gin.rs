//! Sample-level GIN and IN condition tests.
//!
//! The GIN test forms the linear combination of the `Y` columns that
//! annihilates the cross-covariance with `Z`, then checks per `Z` column
//! that the combination is statistically independent of `Z`. The IN test is
//! the single-target analogue built on an ordinary least-squares residual.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::stats::{
    estimate_omega, fisher_combine, hsic_pvalue_prepared, ols_residual, DataMatrix, GramStore,
    HsicArg, OmegaSolution, TestConfig,
};

/// Verdict of a GIN- or IN-style test.
#[derive(Debug, Clone)]
pub struct GinResult {
    /// True when `combined_p >= config_used.alpha`.
    pub satisfied: bool,
    /// Fisher combination of the per-column p-values.
    pub combined_p: f64,
    /// One `(column name, p-value)` entry per `Z` column, in input order.
    pub pairwise_p: Vec<(String, f64)>,
    /// The annihilating direction whose surrogate series was tested.
    pub omega: OmegaSolution,
    /// Configuration the verdict was computed under.
    pub config_used: TestConfig,
    /// Set when the direction estimate or any independence test hit a
    /// degenerate input (constant series, rank-deficient covariance).
    pub degenerate: bool,
}

fn series_from_direction(data: &DataMatrix, cols: &[usize], weights: &[f64]) -> Vec<f64> {
    let values = data.values();
    (0..data.n_rows())
        .map(|row| {
            cols.iter()
                .zip(weights)
                .map(|(&col, &w)| w * values[(row, col)])
                .sum()
        })
        .collect()
}

fn verdict_against_z(
    store: &GramStore,
    series: &[f64],
    z_cols: &[usize],
    omega: OmegaSolution,
    mut degenerate: bool,
) -> Result<GinResult> {
    let config = store.config();
    let surrogate = HsicArg::new(series, config)?;
    let names = store.data().names();
    let mut pairwise_p = Vec::with_capacity(z_cols.len());
    for &col in z_cols {
        let z = store.column_arg(col)?;
        let hsic = hsic_pvalue_prepared(&surrogate, &z, config)?;
        degenerate |= hsic.degenerate;
        pairwise_p.push((names[col].clone(), hsic.p_value));
    }
    let p_values: Vec<f64> = pairwise_p.iter().map(|(_, p)| *p).collect();
    let combined_p = fisher_combine(&p_values)?;
    Ok(GinResult {
        satisfied: combined_p >= config.alpha,
        combined_p,
        pairwise_p,
        omega,
        config_used: config.clone(),
        degenerate,
    })
}

pub(crate) fn gin_on_store(
    store: &GramStore,
    z_cols: &[usize],
    y_cols: &[usize],
) -> Result<GinResult> {
    let omega = estimate_omega(store.data(), y_cols, z_cols, store.config())?;
    let series = series_from_direction(store.data(), y_cols, &omega.omega);
    let degenerate = omega.degenerate;
    verdict_against_z(store, &series, z_cols, omega, degenerate)
}

/// Tests whether the cross-covariance-annihilating combination of the `Y`
/// columns is independent of every `Z` column.
///
/// `y_cols` must contain at least two columns and be disjoint from `z_cols`;
/// `z_cols` must be nonempty.
pub fn gin_test(
    data: &DataMatrix,
    z_cols: &[usize],
    y_cols: &[usize],
    config: &TestConfig,
) -> Result<GinResult> {
    if z_cols.is_empty() {
        return Err(Error::Argument(
            "gin test requires at least one Z column".into(),
        ));
    }
    if y_cols.len() < 2 {
        return Err(Error::Argument(
            "gin test requires at least two Y columns".into(),
        ));
    }
    let z_set: BTreeSet<usize> = z_cols.iter().copied().collect();
    if y_cols.iter().any(|col| z_set.contains(col)) {
        return Err(Error::Argument(
            "Y and Z columns must be disjoint".into(),
        ));
    }
    let store = GramStore::new(data, config);
    gin_on_store(&store, z_cols, y_cols)
}

/// Tests whether the residual of regressing `y_col` on the `Z` columns is
/// independent of every `Z` column.
///
/// The reported direction is the annihilating vector over the augmented
/// column set `(y, Z)`, which coincides with `[1, -beta]` (canonicalized)
/// for the fitted regression coefficients `beta`.
pub fn in_test(
    data: &DataMatrix,
    z_cols: &[usize],
    y_col: usize,
    config: &TestConfig,
) -> Result<GinResult> {
    if z_cols.is_empty() {
        return Err(Error::Argument(
            "in test requires at least one Z column".into(),
        ));
    }
    let residual = ols_residual(data, z_cols, y_col)?;
    let augmented = augment(y_col, z_cols);
    let omega = estimate_omega(data, &augmented, z_cols, config)?;
    let degenerate = omega.degenerate;
    let store = GramStore::new(data, config);
    verdict_against_z(&store, &residual, z_cols, omega, degenerate)
}

/// Runs the GIN test with the target column augmented by the `Z` columns
/// themselves, i.e. on the column set `(y, Z)` against `Z`.
///
/// Overlap between the augmented set and `Z` is intentional here, unlike in
/// [`gin_test`].
pub fn gin_via_augmentation(
    data: &DataMatrix,
    z_cols: &[usize],
    y_col: usize,
    config: &TestConfig,
) -> Result<GinResult> {
    if z_cols.is_empty() {
        return Err(Error::Argument(
            "augmented gin test requires at least one Z column".into(),
        ));
    }
    let augmented = augment(y_col, z_cols);
    let store = GramStore::new(data, config);
    gin_on_store(&store, z_cols, &augmented)
}

fn augment(y_col: usize, z_cols: &[usize]) -> Vec<usize> {
    let mut cols = Vec::with_capacity(z_cols.len() + 1);
    cols.push(y_col);
    cols.extend_from_slice(z_cols);
    cols
}
