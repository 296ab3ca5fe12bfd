//! Personal tracking data to daily features, mood models and explanation charts.
//!
//! The pipeline runs [`ingest`] → [`featurize`] → [`stats`] → [`elasticnet`] /
//! [`mlp`] → [`explain`]. [`synth`] produces synthetic exports with planted
//! ground truth along with brute-force reference solvers.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod featurize;
pub mod ingest;
pub mod stats;
pub mod elasticnet;
pub mod explain;
pub mod mlp;
pub mod pipeline;
pub mod report;
pub mod synth;
