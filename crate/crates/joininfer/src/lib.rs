//! Exact inference for discrete probabilistic graphical models.
//!
//! The engine propagates messages over a generalized hypertree
//! decomposition and computes each bag's factor product with a
//! worst-case-optimal multiway join over sparse listing-representation
//! factors, with per-bag fallback to classical pairwise products. All
//! variable and factor marginals come out of a single two-pass run.
//!
//! With the default `parallel` feature, independent bags at the same tree
//! depth are processed on a rayon pool (`threads > 1`); without it the
//! engine runs fully sequentially with identical results.

pub mod decomposition;
pub mod error;
pub mod hyjar;
pub mod join;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod modelgen;
pub mod oracle;
pub mod par;
pub mod preprocess;
pub mod propagation;
pub mod storage;
pub mod uai;

pub use error::{Error, Result};
pub use model::{FactorScope, FactorTable, Pgm, Variable};
pub use propagation::{run_inference, RunOptions, RunOutput, StrategyChoice};
