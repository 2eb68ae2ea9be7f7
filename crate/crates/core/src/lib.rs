//! Dynamic watermarking in a smart-grid control loop, and the digital-twin
//! attack that defeats it.
//!
//! The crate is organised around the two parties of the loop:
//!
//! * the defender (controller) injects a private watermark at the control
//!   input ([`watermark`]) and checks the sensor reports for its filtered
//!   image ([`detector`]);
//! * the adversary sits on a sensor line, runs a deterministic replica of the
//!   grid ([`adversary::TwinState`]), strips the watermark component out of
//!   the genuine reading and re-attaches it to a forged one ([`adversary`]).
//!
//! [`grid_model`] provides the closed-loop simulator both sides run against,
//! and [`harness`] wires scenarios, Monte Carlo campaigns and result export.

pub mod adversary;
pub mod detector;
mod error;
pub mod grid_model;
pub mod harness;
pub mod seed;
pub mod watermark;

pub use error::{Error, Result};
pub use grid_model::{GridModel, SignalTrace, TraceBundle};
pub use watermark::WatermarkKey;
