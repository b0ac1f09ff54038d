//! Two-step tip calibration.
//!
//! 1. Position: the tip is pivoted about a fixed world point while the
//!    fiducial body moves. The tip offset `P*` and the pivot point are the
//!    joint linear least-squares solution of `R_i p + t_i = c`.
//! 2. Orientation: the tip is seated in holes of known direction and spun
//!    about them. The rotation of `T_I^P` is chosen so that its `z` axis,
//!    carried into the world by each fiducial pose, lines up with the hole
//!    axis. Roll about the tip axis is then fixed from the button direction.

mod file;
mod filter;
mod orientation;
mod position;

pub use file::{read_calibration, write_calibration};
pub use filter::{filter_outliers, FilterOutcome, FilterParams};
pub use orientation::{
    calibrate_orientation, fix_roll_to_button, measured_axes, orientation_objective, Hole,
    OrientationCalibration, OrientationDataset, OrientationOptions, OrientationWarning,
};
pub use position::{
    calibrate_position, calibrate_position_unfiltered, candidate_tip_points, pairwise_objective, pairwise_objective_capped,
    PositionCalibration, PositionDataset, DEFAULT_MIN_ROTATION_SPAN, PAIRWISE_SAMPLE_CAP,
};

use thiserror::Error;

use crate::geometry::{EulerAngles, Pose, Vec3};

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("rotation diversity too low to observe the tip offset ({detail})")]
    DegenerateRotations { detail: String },
    #[error("largest cluster has {largest} points, fewer than min_neighbors = {min_neighbors}")]
    AllOutliers { largest: usize, min_neighbors: usize },
    #[error("button direction is (anti)parallel to the tip axis")]
    DegenerateDirection,
    #[error("orientation refinement did not converge in {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("dataset has {count} samples, above the pairwise cap of {cap}")]
    TooManySamples { count: usize, cap: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("calibration file: {0}")]
    Format(String),
}

/// The fiducial-to-tip transform `T_I^P` plus diagnostics that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipCalibration {
    pub transform: Pose,
    /// Meters.
    pub position_residual_rms: f64,
    /// Radians.
    pub orientation_residual_rms: f64,
    pub filtered_outliers: usize,
}

impl TipCalibration {
    pub fn identity() -> Self {
        Self::from_transform(Pose::identity())
    }

    pub fn from_transform(transform: Pose) -> Self {
        Self {
            transform,
            position_residual_rms: 0.0,
            orientation_residual_rms: 0.0,
            filtered_outliers: 0,
        }
    }

    pub fn tip_offset(&self) -> Vec3 {
        self.transform.translation
    }

    /// Tip approach axis expressed in the fiducial frame.
    pub fn approach_axis(&self) -> Vec3 {
        self.transform.rotation * Vec3::z()
    }
}

pub fn assemble_calibration(
    tip_offset: Vec3,
    angles: &EulerAngles,
    position_residual_rms: f64,
    orientation_residual_rms: f64,
    filtered_outliers: usize,
) -> TipCalibration {
    TipCalibration {
        transform: Pose::new(angles.to_rotation(), tip_offset),
        position_residual_rms,
        orientation_residual_rms,
        filtered_outliers,
    }
}
