use nalgebra::{DMatrix, DVector};

use super::{filter_outliers, CalibError, FilterParams};
use crate::geometry::{Pose, Vec3};

/// Default minimum for the largest pairwise rotation angle of a dataset.
pub const DEFAULT_MIN_ROTATION_SPAN: f64 = std::f64::consts::PI / 6.0;

/// Largest dataset accepted by [`pairwise_objective`], which is O(N²).
pub const PAIRWISE_SAMPLE_CAP: usize = 2000;

/// Singular values below this fraction of the largest mark the pivot system
/// as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// Fiducial poses `T_W^I` recorded while the tip rests on one world point.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDataset {
    poses: Vec<Pose>,
}

impl PositionDataset {
    /// Validates `N >= 3` and that some pair of poses differs in rotation by
    /// at least `min_rotation_span` radians.
    pub fn new(poses: Vec<Pose>, min_rotation_span: f64) -> Result<Self, CalibError> {
        if poses.len() < 3 {
            return Err(CalibError::DegenerateRotations {
                detail: format!("{} poses, at least 3 required", poses.len()),
            });
        }
        let span = max_pairwise_angle(&poses, min_rotation_span);
        if span < min_rotation_span {
            return Err(CalibError::DegenerateRotations {
                detail: format!(
                    "largest pairwise rotation {:.3}° below the {:.3}° minimum",
                    span.to_degrees(),
                    min_rotation_span.to_degrees()
                ),
            });
        }
        Ok(Self { poses })
    }

    pub fn with_default_span(poses: Vec<Pose>) -> Result<Self, CalibError> {
        Self::new(poses, DEFAULT_MIN_ROTATION_SPAN)
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Applies `g ·` to every pose.
    pub fn transformed(&self, g: &Pose) -> Self {
        Self {
            poses: self.poses.iter().map(|p| g.compose(p)).collect(),
        }
    }
}

/// Stops early once `enough` is exceeded.
fn max_pairwise_angle(poses: &[Pose], enough: f64) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in poses.iter().enumerate() {
        for b in &poses[i + 1..] {
            best = best.max(a.rotation.angle_to(&b.rotation));
            if best >= enough {
                return best;
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionCalibration {
    /// `P*`, the tip offset in the fiducial frame.
    pub tip_offset: Vec3,
    /// The fixed contact point in the world frame.
    pub pivot: Vec3,
    /// RMS distance of the kept tip points to `pivot`.
    pub residual_rms: f64,
    pub removed: usize,
    /// Indices of the poses used in the final solve.
    pub kept: Vec<usize>,
}

/// World tip position `R_i p + t_i` for every pose.
pub fn candidate_tip_points(ds: &PositionDataset, p: &Vec3) -> Vec<Vec3> {
    ds.poses.iter().map(|pose| pose.transform_point(p)).collect()
}

/// Solves `min Σ ‖R_i p + t_i − c‖²` over `(p, c)`.
fn solve_pivot<'a>(poses: impl ExactSizeIterator<Item = &'a Pose>) -> Result<(Vec3, Vec3), CalibError> {
    let n = poses.len();
    let mut a = DMatrix::<f64>::zeros(3 * n, 6);
    let mut b = DVector::<f64>::zeros(3 * n);
    for (i, pose) in poses.enumerate() {
        let r = pose.rotation_matrix();
        for row in 0..3 {
            for col in 0..3 {
                a[(3 * i + row, col)] = r[(row, col)];
            }
            a[(3 * i + row, 3 + row)] = -1.0;
            b[3 * i + row] = -pose.translation[row];
        }
    }
    let svd = a.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min / s_max < RANK_TOLERANCE {
        return Err(CalibError::DegenerateRotations {
            detail: format!("pivot system rank deficient (σ_min/σ_max = {:.3e})", s_min / s_max),
        });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| CalibError::DegenerateRotations { detail: e.to_string() })?;
    Ok((
        Vec3::new(x[0], x[1], x[2]),
        Vec3::new(x[3], x[4], x[5]),
    ))
}

fn rms_distance(points: impl Iterator<Item = Vec3>, center: &Vec3) -> f64 {
    let (sum, n) = points.fold((0.0, 0usize), |(s, n), p| (s + (p - center).norm_squared(), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Pivot calibration with one outlier-rejection pass: solve on all poses,
/// cluster the induced tip points, then solve again on the kept poses.
pub fn calibrate_position(
    ds: &PositionDataset,
    params: &FilterParams,
) -> Result<PositionCalibration, CalibError> {
    params.validate()?;
    let (p0, _) = solve_pivot(ds.poses.iter())?;
    let tips = candidate_tip_points(ds, &p0);
    let outcome = filter_outliers(&tips, params)?;
    let (tip_offset, pivot) = solve_pivot(outcome.kept.iter().map(|&i| &ds.poses[i]))?;
    let residual_rms = rms_distance(
        outcome.kept.iter().map(|&i| ds.poses[i].transform_point(&tip_offset)),
        &pivot,
    );
    Ok(PositionCalibration {
        tip_offset,
        pivot,
        residual_rms,
        removed: outcome.removed,
        kept: outcome.kept,
    })
}

/// Single solve on every pose, no filtering.
pub fn calibrate_position_unfiltered(ds: &PositionDataset) -> Result<PositionCalibration, CalibError> {
    let (tip_offset, pivot) = solve_pivot(ds.poses.iter())?;
    let residual_rms = rms_distance(ds.poses.iter().map(|p| p.transform_point(&tip_offset)), &pivot);
    Ok(PositionCalibration {
        tip_offset,
        pivot,
        residual_rms,
        removed: 0,
        kept: (0..ds.len()).collect(),
    })
}

/// `Σ_i Σ_j ‖(R_i p + t_i) − (R_j p + t_j)‖` over ordered pairs.
pub fn pairwise_objective(ds: &PositionDataset, p: &Vec3) -> Result<f64, CalibError> {
    pairwise_objective_capped(ds, p, PAIRWISE_SAMPLE_CAP)
}

pub fn pairwise_objective_capped(ds: &PositionDataset, p: &Vec3, cap: usize) -> Result<f64, CalibError> {
    if ds.len() > cap {
        return Err(CalibError::TooManySamples { count: ds.len(), cap });
    }
    let tips = candidate_tip_points(ds, p);
    let mut total = 0.0;
    for a in &tips {
        for b in &tips {
            total += (a - b).norm();
        }
    }
    Ok(total)
}
