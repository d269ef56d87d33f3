//! Sparse recovery by natural thresholding, with the usual greedy and
//! thresholding baselines and a Monte-Carlo harness to compare them.

mod error;

pub mod baselines;
pub mod exec;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod nt;
pub mod oracles;
pub mod regularizers;
pub mod rng;
pub mod solver;
pub mod thresholding;
pub mod verify;

pub use error::{NtkError, Result};
