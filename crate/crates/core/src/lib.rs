//! Link-level simulator for rate-splitting cell-free MU-MIMO downlinks with
//! imperfect CSIT.
//!
//! The crate covers the channel model (three-slope path loss, shadowing and
//! an additive estimation-error model), large-scale AP selection, the robust
//! MMSE common and private precoders, SINR and ergodic sum-rate evaluation,
//! a FLOP cost model and the Monte-Carlo sweeps built on top of them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod clustering;
pub mod cost;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod precoders;
pub mod rates;
pub mod rng;
pub mod selftest;

pub use error::{Error, Result};
