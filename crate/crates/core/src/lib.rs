//! Dual approximate dynamic programming: price decomposition of multi-unit
//! stochastic optimal control problems.
//!
//! A [`model::ProblemSpec`] couples units through `Σ_i g_t^i = 0`. The
//! [`dadp`] loop prices that constraint with a multiplier process projected
//! on an information variable, solves each priced unit by grid dynamic
//! programming ([`dp`]), simulates ([`scenario`]) and updates the
//! multipliers scenario-wise. [`bench`] holds generators and exact oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod condexp;
pub mod dadp;
pub mod dp;
pub mod error;
pub mod exec;
pub mod model;
pub mod scenario;

pub use error::{Error, Result};
pub use exec::Execution;
