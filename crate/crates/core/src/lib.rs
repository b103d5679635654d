//! Desk-scale laboratory for adaptive gradient methods.
//!
//! The crate wires together five layers:
//!
//! * [`numerics`] — vectors, compensated accumulation, seeded counter-based
//!   random streams;
//! * [`objectives`] / [`oracles`] — certified test problems and stochastic
//!   gradient sources with declared constants;
//! * [`optimizers`] — pure step functions for AdaGrad-Norm, coordinated
//!   RMSProp on its analyzed schedule, and an SGD baseline;
//! * [`telemetry`] / [`analysis`] — per-step recording of the decrease
//!   quantities and cross-seed checkpoint statistics;
//! * [`config`] / [`runner`] / [`report`] / [`verdicts`] — the reproducible
//!   experiment pipeline behind the `adalab` binary.

// `!(x > 0.0)`-style guards are used throughout so NaN parameters fail
// validation; the rewrite clippy suggests loses that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certify;
pub mod config;
pub mod error;
pub mod manifest;
pub mod numerics;
pub mod objectives;
pub mod optimizers;
pub mod oracles;
pub mod report;
pub mod runner;
pub mod telemetry;
pub mod verdicts;

pub use error::{Error, Result};
pub use numerics::{standard_normal, CompensatedScalar, RngStream, Vector};
