//! Reinforcement-learning-guided sampling for stochastic Koopman spectral
//! estimation.

// Guards are written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod cli;
pub mod dictionary;
pub mod env;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod neural;
pub mod rng;
pub mod sdmd;
pub mod sde;

pub use error::{Error, Result};
