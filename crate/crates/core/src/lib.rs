//! Tracked-stylus toolkit: tip calibration, waypoint capture, drawing frames
//! and evaluation of demonstrated trajectories.
//!
//! Units are meters, radians, seconds and newtons throughout. Quaternions are
//! exchanged as `[qx, qy, qz, qw]`.

pub mod calib;
pub mod cli;
pub mod eval;
pub mod framing;
pub mod geometry;
pub mod ingest;
pub mod synth;
