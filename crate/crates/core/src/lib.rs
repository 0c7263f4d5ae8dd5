//! Optimization-driven deep reinforcement learning for joint active and
//! passive beamforming in an IRS-assisted MISO downlink.

pub mod channel;
pub mod drl;
pub mod env;
pub mod error;
pub mod harness;
pub mod inneropt;
pub mod numerics;

pub use error::{Error, Result};
