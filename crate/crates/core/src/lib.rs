//! Optimal savings with wealth in the utility function.
//!
//! The crate solves the infinite-horizon income fluctuation problem in which
//! the agent values both consumption and wealth, and predicts the limiting
//! marginal propensity to consume from spectral properties of the primitives.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod io;
pub mod model;
pub mod policy;
pub mod simulate;
pub mod spectral;
pub mod time_iteration;
pub mod two_period;
