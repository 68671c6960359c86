//! Simulator for scheduling camera perception workloads on a heterogeneous
//! multi-accelerator platform.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the matrix arithmetic they implement.
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod criteria;
pub mod envgen;
pub mod error;
pub mod flexai;
pub mod platform;
pub mod sched;
pub mod sim;

pub use error::{Error, Result};
