//! Recommendation of conditional formatting and charts over tabular data.
//!
//! The pipeline runs in layers: [`table`] parses raw rows into typed tables,
//! [`signatures`] profiles every cell and field statistically, [`semantics`]
//! turns records into (user intent, data focus) labels and prunes candidate
//! actions, [`embed`] provides text embeddings, [`model`] is a small
//! transformer encoder with four task heads, and [`recommend`] produces the
//! ranked output. [`corpus`] handles the interchange format and synthetic
//! corpus generation; [`evalkit`] computes the recall/precision metrics.

pub mod cli;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod evalkit;
pub mod model;
pub mod recommend;
pub mod semantics;
pub mod signatures;
pub mod table;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
