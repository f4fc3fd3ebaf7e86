//! Sparse tag-profile recommendation with budgeted atom selection.

pub mod cluster;
pub mod corpus;
pub mod dict;
pub mod error;
pub mod forest;
pub mod importance;
pub mod metrics;
pub mod pipeline;
pub mod qaoa;
pub mod qubo;
pub mod seed;
pub mod sketch;
pub mod sparse;
pub mod synthetic;

pub use error::{Error, Result};
