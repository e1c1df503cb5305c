//! Sparse regression toolkit for compositional (positive-valued) data.
//!
//! Models of interest are log-ratio models: linear models whose predictors are
//! terms `log(x_j / x_k)` over pairs of raw features. Fitting all `C(p,2)`
//! ratio columns directly is infeasible for large `p`, so the estimators here
//! work in the `p`-dimensional space of log-feature coefficients constrained
//! to sum to zero, which is equivalent to the expanded-ratio lasso at half the
//! penalty level.
//!
//! The crate provides:
//!
//! * [`data`]: dataset ingestion, log transforms, ratio expansion;
//! * [`solver`]: weighted L1 coordinate descent (Gaussian and binomial) and
//!   the sum-zero constrained lasso built on it via data augmentation;
//! * [`logratio`]: the pair/contrast coefficient embedding, single-stage and
//!   two-stage log-ratio lasso;
//! * [`stepwise`]: approximate forward stepwise selection over implicit
//!   ratios, plus an exact forward-stepwise engine;
//! * [`inference`]: classical F-test and post-selective truncated-Gaussian
//!   test of the sum-zero (log-ratio) hypothesis;
//! * [`cv`]: K-fold and group-blocked cross-validation;
//! * [`simulate`]: reproducible simulation experiments and runtime benches;
//! * [`cli`]: the command-line front end (see the `lrlasso` binary).

pub mod cli;
pub mod cv;
pub mod data;
pub mod error;
pub mod inference;
pub mod linalg;
pub mod logratio;
pub mod simulate;
pub mod solver;
pub mod stepwise;

pub use error::{Error, Result};
