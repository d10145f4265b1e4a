//! Numerical core of a desk-scale laboratory for large-batch SGD.
//!
//! Synthetic stochastic objectives, single-batch learning-rate schedules with
//! fixed scaling rules, gain-ratio estimators, Scaled SGD and AdaScale SGD
//! loops over a simulated `S`-worker data-parallel step, and executable
//! convergence bounds.
//!
//! The crate is `no_std` with `alloc`. File formats, the command line and
//! thread pools live in the `adascale-lab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod engine;
mod error;
pub mod gain;
pub mod linalg;
pub mod objectives;
pub mod rng;
pub mod schedules;

pub use error::{Error, Result};
pub use linalg::{Matrix, ParamVector};
