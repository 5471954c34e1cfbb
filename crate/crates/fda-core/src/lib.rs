//! Fairness-aware recommender training toolkit.
//!
//! Trains embedding-based implicit-feedback recommenders with a pairwise
//! ranking loss, augments the training data with bounded-perturbation fake
//! interactions that balance two sensitive user groups, and evaluates both
//! ranking accuracy (HR/NDCG) and group fairness (DP/EO/JS divergence).
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`dataset`] — ingestion, binarization, k-core filtering, splitting,
//!   group assignment, and the on-disk prepared-dataset format.
//! * [`backbone`] — embedding tables, preference scoring, BPR loss and
//!   gradients, Adam, and an optional linear graph-propagation backbone.
//! * [`augment`] — cross-group quadruple sampling, per-item perturbations,
//!   the fake-data loss, and the mask operation.
//! * [`trainer`] — the bi-level training loop (inner perturbation steps,
//!   outer embedding steps) plus checkpointing.
//! * [`metrics`] — top-K retrieval, HR/NDCG, DP/EO, and JS divergence.
//! * [`synth`] — synthetic corpora with planted group skew, used for fast
//!   directional experiments and tests.

pub mod augment;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod metrics;
pub mod report;
pub mod seeding;
pub mod synth;
pub mod trainer;

mod error;

pub use error::FdaError;

pub type Result<T> = std::result::Result<T, FdaError>;
