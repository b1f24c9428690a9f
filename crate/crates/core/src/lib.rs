//! Conditional laws of heavy-tailed random walks given a large sum.

// `!(a > b)` is used on purpose so that NaN lands on the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dist;
pub mod error;
pub mod fluctuations;
pub mod lattice;
pub mod order_swap;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod thresholds;
pub mod tv;

pub use dist::TailedDistribution;
pub use error::{Error, Result};
pub use sampler::ConditioningEvent;
