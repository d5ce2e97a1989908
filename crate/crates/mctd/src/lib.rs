//! Monte Carlo Tree Descent (MCTD) black-box optimization toolkit.
//!
//! MCTD minimizes an expensive black-box function by growing a search tree
//! whose nodes each own a local sample set, a Gaussian-Process surrogate, and
//! a trust region. Every iteration selects a node with a modified UCT rule,
//! runs interleaved stochastic-three-point descent and trust-region Bayesian
//! optimization at that node, and backs the improved best value up the tree.
//!
//! The crate also ships a benchmark harness with baseline optimizers
//! (random search, Nelder-Mead, a standalone trust-region BO), seeded CSV
//! traces, and multi-seed summary reporting. See the `harness` module and the
//! `mctd` CLI binary.

pub mod descent;
pub mod domain;
pub mod gp;
pub mod harness;
pub mod local_bo;
pub mod tree;

mod error;

pub use error::Error;

/// Seeded RNG used everywhere for reproducible runs.
pub type Rng = rand_chacha::ChaCha8Rng;

pub type Result<T> = std::result::Result<T, Error>;
