//! Experiment runner around `adascale-core`: TOML experiment files, CSV
//! traces and summaries, a rayon-backed executor, the verification suites
//! and the `adascale` command line.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;
pub mod suites;

pub use error::{LabError, Result};
