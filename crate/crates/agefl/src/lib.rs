//! Configuration, experiment orchestration and CSV output for the
//! age-aware private FL scheduler in `agefl-core`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod format;
pub mod harness;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
