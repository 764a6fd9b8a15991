//! Graph-based semi-supervised active learning.
//!
//! A similarity graph over feature vectors defines a Gaussian prior on node
//! values. Three posteriors are supported: Gaussian regression (GR),
//! harmonic functions (HF) and a probit model under the Laplace
//! approximation. Queries are chosen by acquisition functions that score
//! each unlabeled node, several of which use a cheap rank-one look-ahead of
//! the posterior after a hypothetical label.

pub mod acquisition;
pub mod datasets;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod instrument;
pub mod linalg;
pub mod lookahead;
pub mod normal;
pub mod posterior;

pub use error::{Error, Result};
pub use exec::Parallelism;
