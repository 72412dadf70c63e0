//! Straggler-resilient approximate matrix multiplication for serverless
//! platforms, run against a deterministic simulator.
//!
//! The crate has four layers:
//!
//! * [`matrix`] and [`blocked`]: dense matrices and their block layout in an
//!   object store.
//! * [`sim`]: the serverless platform model (stateless workers, a shared
//!   store, sampled job times with a straggler tail).
//! * [`sketch`] and [`multiply`]: count-sketch, the over-provisioned stacked
//!   sketch, and the naive, blocked, sketched and product-coded
//!   multiplication schemes.
//! * [`cost`], [`stats`] and [`lp`]: the `(α, β, γ)` cost model, Monte Carlo
//!   checks of the accuracy guarantees, and a barrier LP solver whose
//!   Hessian can be computed through the sketched scheme.
//!
//! [`cli`] holds the experiment runners behind the `oversketch` binary.

pub mod blocked;
pub mod cost;
pub mod error;
pub mod cli;
pub mod lp;
pub mod matrix;
pub mod multiply;
pub mod seeding;
pub mod sim;
pub mod sketch;
pub mod stats;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
