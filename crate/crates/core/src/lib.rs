//! Simulation of the lattice spin O(N) Langevin dynamics, its large-N
//! mean-field limit, and the self-consistent Gaussian stationary fields.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::manual_is_multiple_of)]

pub mod checkpoint;
pub mod covariance;
pub mod dynamics;
pub mod error;
mod fft;
pub mod green;
pub mod lattice;
pub mod meanfield;
pub mod metrics;
pub mod rng;
pub mod stationary;

pub use error::{Error, Result};
