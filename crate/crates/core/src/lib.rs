//! Learning and simulating tree-structured dependence among multivariate extremes.
//!
//! The crate covers the whole workflow:
//!
//! - [`tree`] and [`model`]: labeled trees, bivariate edge families and the
//!   extremal tree models built from them;
//! - [`closed_form`]: exact extremal variograms, Hüsler–Reiss extremal
//!   correlations and Monte-Carlo oracles;
//! - [`sampling`]: exact simulation of rooted extremal functions, the
//!   associated max-stable vector and noisy domain-of-attraction data;
//! - [`estimators`]: rank-based empirical extremal correlation and
//!   extremal variogram;
//! - [`learn`]: minimum spanning trees over estimated dependence distances,
//!   and the fitted Hüsler–Reiss tree;
//! - [`experiments`]: the simulation-study harness and bootstrap edge
//!   stability;
//! - [`pipeline`]: CSV ingestion and the end-to-end analysis report.

pub mod closed_form;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod learn;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod special;
pub mod tree;

pub use error::{Error, Result};
pub use model::{DataMatrix, Direction, EdgeDistribution, ExtremalTreeModel, WeightMatrix};
pub use rng::RandomStream;
pub use tree::{LabeledTree, NodeId};

/// Crate version, embedded in JSON reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
