//! Privacy-power functions for smart meters backed by an average-power-limited
//! alternative energy source (AES).
//!
//! A household's true demand `X` is served partly by the grid (`Y`, what the
//! meter reports) and partly by the AES (`X - Y`). The privacy-power function
//! `I(P)` is the smallest mutual information `I(X; Y)` achievable by a
//! memoryless stochastic policy `f(y | x)` with `0 <= Y <= X` and
//! `E[sum(X - Y)] <= P`.
//!
//! The crate is organised by capability:
//!
//! - [`models`]: discrete, binary and continuous load distributions.
//! - [`ba`]: constrained Blahut-Arimoto solver for arbitrary finite alphabets,
//!   including correlated multi-user loads on the product alphabet.
//! - [`closed_forms`]: exact binary and exponential curves, the Shannon lower
//!   bound and its achievability check for piecewise densities.
//! - [`allocator`]: splitting the AES budget across independent users.
//! - [`heuristics`]: time-division and limit-maximum-output baselines.
//! - [`simulator`]: seeded Monte-Carlo validation of memoryless policies.
//! - [`scenario`]: JSON scenarios and the batch tasks behind the `privpower` binary.
//!
//! ```
//! use privpower::closed_forms::binary_leakage;
//! use privpower::models::BinaryLoadModel;
//! use privpower::units::Unit;
//!
//! let model = BinaryLoadModel::new(0.0, 1.0, 0.5).unwrap();
//! let bits = binary_leakage(&model, 0.2, Unit::Bits);
//! assert!((bits - 0.395815).abs() < 1e-6);
//! ```

#![forbid(unsafe_code)]

pub mod allocator;
pub mod ba;
pub mod closed_forms;
pub mod error;
pub mod heuristics;
pub mod info;
pub mod models;
pub mod quadrature;
pub mod scenario;
pub mod simulator;
pub mod units;

pub use error::{Error, Result};
pub use units::{Leakage, Unit};
