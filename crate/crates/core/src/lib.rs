//! The p-frozen Erdős–Rényi random graph process: exact forest counts,
//! forest sampling, Monte-Carlo simulation, fluid-limit numerics and the
//! statistical checks that tie them together.

pub mod acceptance;
pub mod error;
pub mod fluid_limit;
pub mod forest_counts;
pub mod forest_sampler;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod special_functions;
pub mod stats_harness;

pub use error::{Error, Result};
