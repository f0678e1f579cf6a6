//! Non-stationary (R,S) inventory control under correlated normal demand.
//!
//! Demand over a finite horizon is modelled as a multivariate normal vector,
//! either directly or through an AR/MA/ARMA/AR-ARCH process. Policies are
//! planned by a replenishment-cycle shortest path over piecewise-linearised
//! loss functions and evaluated against a discretised dynamic program,
//! Monte Carlo simulation and receding-horizon control.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod demand;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod normal;
pub mod policy;
pub mod sdp;
pub mod simulate;

pub use error::{Error, Result};
