//! Threshold tensor factor models in CP form.
//!
//! Estimation runs in two stages. [`cp`] fits the CP loadings from a lagged
//! auto-moment of the tensor series and extracts one univariate factor series
//! per component; [`tar`] then fits a threshold autoregression to each factor.
//! [`pipeline`] ties the stages together and runs rolling one-step forecasts,
//! [`simulation`] generates synthetic studies, and [`io`] handles panels,
//! configuration and model files, and [`cli`] implements the `ttfm` command.

// `!(x > 0.0)` is used on purpose so NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cp;
pub mod error;
pub mod io;
mod linalg;
pub mod pipeline;
pub mod simulation;
pub mod tar;
pub mod tensor;

pub use error::{Error, Result};
