//! Energy management for a battery/supercapacitor electric city bus.
//!
//! The crate converts drive cycles into power demand, models both storage
//! packs and battery capacity fade, optimises the power split with backward
//! dynamic programming, extracts linear split rules from optimal
//! trajectories and runs three energy-management strategies side by side.
//! Passenger load, which sets the bus mass, is predicted from calendar and
//! weather features.

// Parameter checks are written `!(x > 0.0)` on purpose so that NaN fails.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod dpcore;
pub mod error;
pub mod hess;
pub mod io;
pub mod predict;
pub mod scenario;
pub mod synth;
pub mod vehicle;

pub use error::{EmsError, Result};
