//! Location-aware predictive beamforming for a UAV-to-UE link.
//!
//! The crate simulates a UAV moving under a stochastic per-slot velocity
//! model, a static multi-antenna UE, and the line-of-sight channel between
//! them. The UE steers its receive beam toward a predicted UAV location;
//! predictions come from a stacked LSTM trained here from scratch, from a
//! two-point constant-velocity Kalman filter, or from a genie.

// `!(x > 0.0)` is used deliberately: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kalman;
pub mod lrnet;
pub mod numerics;
pub mod phy;
pub mod scenario;

pub use error::{Error, Result};
