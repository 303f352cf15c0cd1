//! Simulation of rapid on-off-division duplex (RODD) mutual broadcast in
//! wireless networks, with a message-passing decoder and slotted ALOHA / CSMA
//! random-access baselines.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Sparse kernels walk
// index ranges of several parallel arrays at once.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod decoder;
pub mod harness;
pub mod error;
pub mod geometry;
pub mod phy;
pub mod quad;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
