// Index loops over parallel structures are the norm in the matrix code.
#![allow(clippy::needless_range_loop)]

//! Relation-guided representation learning.
//!
//! Joint training of a deep auto-encoder and a pairwise-relation
//! (self-expression) matrix, conversion of the learned relations into an
//! affinity graph for spectral clustering, clustering metrics, and an
//! out-of-sample path that labels unseen points by nearest neighbor in the
//! learned latent space.

pub mod affinity;
pub mod cluster;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
