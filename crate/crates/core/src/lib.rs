//! Synthetic job-record generation for distributed-computing workloads.
//!
//! The crate covers the whole loop: ingest job traces ([`ingest`]) or draw a
//! seeded mock corpus ([`mock`]), encode tables into dense matrices
//! ([`preprocess`]), train a generator ([`smote`] or [`diffusion`]), and
//! score synthetic tables against real ones ([`metrics`], backed by the
//! boosted-tree regressor in [`gbdt`]).

pub mod diffusion;
pub mod error;
pub mod gbdt;
pub mod ingest;
pub mod metrics;
pub mod mock;
pub mod neighbors;
pub mod par;
pub mod preprocess;
pub mod smote;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
pub use table::{Column, FeatureKind, Frame, JobRecord, JobTable, JOB_SCHEMA};
