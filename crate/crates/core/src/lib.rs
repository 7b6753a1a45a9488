//! Audit black-box tabular classifiers on a √N query budget.
//!
//! The toolkit recursively bi-clusters unlabeled rows with random
//! projections, queries the black box once per cluster leaf, and trains a
//! surrogate model from those few labels. Because the queries are real
//! domain rows, adversarial "lying" scaffolds that detect explanation
//! traffic cannot tell the audit apart from normal use. The surrogate is
//! then scored with standard predictive-performance and group-fairness
//! metrics and ranked against bias-mitigation baselines with
//! nonparametric statistics.
//!
//! Module map:
//!
//! - [`data`] — CSV ingestion, schemas, encoding, the 40:40:20 split, and
//!   a synthetic biased-data generator for desk-scale experiments.
//! - [`cluster`] — recursive random-projection bi-clustering and per-leaf
//!   sampling; the leaf count is the query budget.
//! - [`learners`] — the [`learners::Predictor`] contract plus from-scratch
//!   decision trees and random forests.
//! - [`adversary`] — the lying scaffold: an out-of-distribution detector
//!   routing suspected explanation queries to an innocuous decoy.
//! - [`explain`] — local linear explanations, influential-feature sets,
//!   and Jaccard comparison of sets.
//! - [`metrics`] — five performance and four group-fairness metrics.
//! - [`mitigation`] — simplified FairMASK / Fair-SMOTE / MAAT baselines.
//! - [`stats`] — Cliff's delta, bootstrap significance, Scott-Knott
//!   ranking, and win/tie/loss accounting.
//! - [`pipeline`] — the end-to-end experiment runner behind the CLI.

pub mod adversary;
pub mod cluster;
pub mod data;
pub mod error;
pub mod explain;
pub mod learners;
pub mod metrics;
pub mod mitigation;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
