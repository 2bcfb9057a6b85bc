//! Multi-machine power-system transient simulation with extended and
//! unscented Kalman filter estimation of rotor angles and speeds.
//!
//! Pipeline: [`cases`] → [`powerflow`] → [`reduction`] → [`dynamics`] →
//! [`measurement`] → [`filters`], orchestrated by [`harness`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cases;
pub mod dynamics;
pub mod error;
pub mod filters;
pub mod harness;
pub mod measurement;
pub mod powerflow;
pub mod reduction;

pub use error::{Error, Result};
