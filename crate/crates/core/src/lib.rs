//! Exact, consistent interpretation of piecewise linear classifiers that are
//! reachable only through a prediction API.
//!
//! A piecewise linear model (a model tree, or any network built from
//! rectifier units and softmax) applies a single affine classifier inside
//! each of its locally linear regions. The OpenAPI interpreter recovers the
//! decision features of that classifier for a query instance using nothing
//! but API predictions: it turns log-odds of sampled predictions into linear
//! equations, and accepts a sample only when an overdetermined system built
//! from it is consistent, shrinking the sampling hypercube until that
//! happens. A consistent system certifies (with probability one) that the
//! recovered parameters are exactly those of the query's region.
//!
//! The crate ships the pieces needed to build and evaluate that claim end to
//! end:
//!
//! - [`model`] — desk-scale model trees and rectifier networks with a
//!   white-box oracle for region identity and local linear forms;
//! - [`api`] — the query-only boundary: an in-process adapter, an HTTP
//!   server and client, and query accounting;
//! - [`linsys`] — log-odds equation assembly plus the determined and
//!   overdetermined solvers;
//! - [`interpret`] — the OpenAPI interpreter alongside naive, ZOO, LIME, and
//!   white-box gradient baselines;
//! - [`metrics`] — region/weight difference, L1 exactness, cosine
//!   consistency, and ranked feature ablation;
//! - [`experiment`] — a seeded experiment runner emitting CSV/JSON reports;
//! - [`render`] — SVG heatmaps of decision features.

pub mod api;
pub mod error;
pub mod experiment;
pub mod interpret;
pub mod linsys;
pub mod metrics;
pub mod model;
pub mod render;

pub use error::{Error, Result};
pub use model::{Instance, Model, Prediction};
