//! Reconstruction of signed ego network models from per-ego interaction
//! timelines.
//!
//! The pipeline runs in stages: [`ingestion`] parses timeline files,
//! [`preprocessing`] drops non-person and inactive egos and aggregates
//! per-alter relationships, [`circles`] clusters active alters by contact
//! frequency into nested circles, [`signing`] labels interactions through a
//! pluggable sentiment provider and signs each relationship, [`analysis`]
//! computes dataset-level tables, and [`topics`] ranks terms and correlates
//! topic features with negativity. [`simgen`] generates synthetic datasets
//! with a ground-truth manifest so every stage can be checked against known
//! planted structure, and [`pipeline`] chains the stages over resumable
//! intermediate files.

pub mod analysis;
pub mod circles;
pub mod config;
pub mod error;
pub mod ingestion;
pub mod pipeline;
pub mod preprocessing;
pub mod signing;
pub mod simgen;
pub mod topics;

pub use error::{Error, Result};

/// Seconds in a Julian year; the unit behind every annualized frequency.
pub const YEAR_SECONDS: f64 = 31_557_600.0;

/// Seconds in a day.
pub const DAY_SECONDS: f64 = 86_400.0;
