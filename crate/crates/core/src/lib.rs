//! Decentralized leader-follower formation control with double deep Q-networks.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod learner;
pub mod net;
pub mod policy;
pub mod registry;
pub mod reward;

pub use error::{Error, Result};
