//! Experiment runner for `wwlab-core`: JSON configurations, a result cache,
//! report writers and the acceptance self-test.

pub mod cache;
pub mod config;
pub mod error;
pub mod ops;
pub mod report;
pub mod selftest;

pub use error::{LabError, LabResult};
