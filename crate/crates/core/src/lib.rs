//! Discovery of linear non-Gaussian latent structure from observational
//! data, built around shared-noise independence (GIN) tests.
//!
//! The crate covers the full pipeline: model description ([`graph`]),
//! synthetic data generation ([`synth`]), the statistical layer
//! ([`stats`], [`gin`]), an exact population-level oracle ([`oracle`]),
//! the structure-discovery search ([`discovery`]), and benchmark scoring
//! ([`eval`]).

pub mod discovery;
pub mod error;
pub mod eval;
pub mod gin;
pub mod graph;
pub mod oracle;
pub mod stats;
pub mod synth;
