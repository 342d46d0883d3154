//! Variable-length Markov chain (context tree) estimation with penalty
//! radii tuned by a Gaussian multiplier bootstrap, plus simultaneous
//! confidence bands for many means and Monte-Carlo checks of the
//! max-statistic Gaussian coupling and anti-concentration bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counting;
pub mod error;
pub mod gausslab;
pub mod manymeans;
pub mod normal;
pub mod penalties;
pub mod pruning;
pub mod reference;
pub mod rng;
pub mod sequences;

pub use error::{Error, Result};
