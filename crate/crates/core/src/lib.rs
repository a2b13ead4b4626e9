//! Decoupled/recoupled Bayesian forecasting for multivariate time series.
//!
//! The library filters each series with a fast univariate conjugate model
//! (Gaussian [`dlm`] or count-valued [`dglm`]) and recouples the series for
//! joint forecasting through explicit parental structure: ordered/triangular
//! dependence in [`ddnm`], arbitrary simultaneous parents with importance
//! sampling and variational-Bayes decoupling in [`sgdlm`]. [`scoring`] holds
//! forecast evaluation (log scores, PITs, model-probability ledgers) and
//! [`netflow`] a network-flow monitor built on the count models.

pub mod ddnm;
pub mod dglm;
pub mod dlm;
pub mod error;
pub mod linalg;
pub mod regression;
pub mod netflow;
pub mod rng;
pub mod scoring;
pub mod sgdlm;
pub mod special;
pub mod structure;

pub use error::{CoreError, Result};
