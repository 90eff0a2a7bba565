//! Structure recovery for sparse Gaussian graphical models.
//!
//! Two estimators are provided. [`dice`] runs degree-constrained conditional
//! variance estimation, adversarial support testing and non-edge elimination;
//! its sample requirement depends only on the dimension, the maximum degree and
//! the minimum normalized edge strength. [`slice`] keeps the first stage,
//! reads neighborhoods off the ℓ0-constrained regressions and thresholds the
//! geometric mean of the two directed coefficients.
//!
//! Supporting modules generate ground-truth models ([`model`]), draw samples
//! ([`sampling`]), plan sample sizes ([`bounds`]) and run experiment sweeps
//! ([`harness`]).

pub mod bounds;
pub mod dice;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod regression;
pub mod sampling;
pub mod slice;
pub mod subsets;

pub use error::{GgmError, Result};
