//! Orientation calibration of the tip frame.
//!
//! With the tip seated in hole `i` of world direction `z_ref,i`, every pose
//! `j` gives the tip axis expressed in the fiducial frame directly:
//! `a_ij = R_ij⁻¹ z_ref,i`. The candidate rotation `R` (yaw-pitch-roll) is
//! scored by `Σ (1 − cos θ_ij)` with `θ_ij` the angle between
//! `R_ij R e_z` and `z_ref,i`. Because both vectors are unit length this
//! equals `½ Σ ‖a_ij − R e_z‖²`, which is what the Levenberg-Marquardt
//! refinement minimizes.
//!
//! Roll about the tip axis does not change the objective. The solver keeps
//! the roll of its starting point; [`fix_roll_to_button`] sets it afterwards.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, UnitQuaternion};

use super::{filter_outliers, CalibError, FilterParams};
use crate::geometry::{
    angle_between, euler_to_rotation, normalize, rotation_between, EulerAngles, Pose, Vec3,
};

/// Reference axes closer than this are treated as parallel.
const PARALLEL_AXES: f64 = 1.0 * std::f64::consts::PI / 180.0;
/// Pitch beyond `π/2 − PITCH_MARGIN` triggers re-anchoring of the Euler chart.
const PITCH_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Hole {
    /// Unit direction of the hole in the world frame.
    pub reference_axis: Vec3,
    /// Fiducial poses recorded while spinning the pen in this hole.
    pub poses: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationDataset {
    holes: Vec<Hole>,
}

impl OrientationDataset {
    /// Normalizes the reference axes. A hole needs at least 3 poses.
    pub fn new(holes: Vec<Hole>) -> Result<Self, CalibError> {
        if holes.is_empty() {
            return Err(CalibError::InvalidDataset("no holes".into()));
        }
        let mut out = Vec::with_capacity(holes.len());
        for (i, hole) in holes.into_iter().enumerate() {
            if hole.poses.len() < 3 {
                return Err(CalibError::InvalidDataset(format!(
                    "hole {i} has {} poses, at least 3 required",
                    hole.poses.len()
                )));
            }
            let axis = normalize(&hole.reference_axis)
                .map_err(|_| CalibError::InvalidDataset(format!("hole {i} has a zero reference axis")))?;
            out.push(Hole {
                reference_axis: axis,
                poses: hole.poses,
            });
        }
        Ok(Self { holes: out })
    }

    pub fn holes(&self) -> &[Hole] {
        &self.holes
    }

    /// Largest angle between any two reference axes.
    pub fn axis_spread(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.holes.iter().enumerate() {
            for b in &self.holes[i + 1..] {
                if let Ok(angle) = angle_between(&a.reference_axis, &b.reference_axis) {
                    best = best.max(angle);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationOptions {
    /// Per-hole filter on the fiducial-frame axis estimates; `None` disables it.
    /// A hole with fewer poses than `min_neighbors + 1` uses `poses − 1`.
    pub axis_filter: Option<FilterParams>,
    /// Roll about the tip axis of the starting rotation, radians.
    pub initial_roll: f64,
    pub max_iterations: usize,
}

impl Default for OrientationOptions {
    fn default() -> Self {
        Self {
            axis_filter: Some(FilterParams {
                neighborhood_radius: 0.0175,
                min_neighbors: 10,
            }),
            initial_roll: 0.0,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrientationWarning {
    /// All reference axes lie within 1° of each other (or there is one hole).
    DegenerateAxes { spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationCalibration {
    pub angles: EulerAngles,
    pub rotation: UnitQuaternion<f64>,
    /// RMS of the per-pose axis misalignment over kept poses, radians.
    pub residual_rms: f64,
    pub removed: usize,
    pub iterations: usize,
    pub warnings: Vec<OrientationWarning>,
}

impl OrientationCalibration {
    /// Tip approach axis in the fiducial frame.
    pub fn approach_axis(&self) -> Vec3 {
        self.rotation * Vec3::z()
    }
}

/// Per-hole tip-axis estimates in the fiducial frame, `R_ij⁻¹ z_ref,i`.
pub fn measured_axes(ds: &OrientationDataset) -> Vec<Vec<Vec3>> {
    ds.holes
        .iter()
        .map(|h| {
            h.poses
                .iter()
                .map(|p| p.rotation.inverse() * h.reference_axis)
                .collect()
        })
        .collect()
}

/// `Σ_i Σ_j (1 − cos θ_ij)` for a candidate tip rotation, over every pose.
pub fn orientation_objective(ds: &OrientationDataset, rotation: &UnitQuaternion<f64>) -> f64 {
    let mut total = 0.0;
    for h in &ds.holes {
        for p in &h.poses {
            let measured = p.rotation * (rotation * Vec3::z());
            total += 1.0 - measured.dot(&h.reference_axis);
        }
    }
    total
}

pub fn calibrate_orientation(
    ds: &OrientationDataset,
    opts: &OrientationOptions,
) -> Result<OrientationCalibration, CalibError> {
    let mut warnings = Vec::new();
    let spread = ds.axis_spread();
    if spread < PARALLEL_AXES {
        warnings.push(OrientationWarning::DegenerateAxes { spread });
    }

    let all_axes = measured_axes(ds);
    let mut axes: Vec<Vec<Vec3>> = Vec::with_capacity(all_axes.len());
    let mut removed = 0;
    for hole_axes in all_axes {
        match opts.axis_filter {
            Some(params) => {
                let params = FilterParams {
                    min_neighbors: params.min_neighbors.min(hole_axes.len() - 1),
                    ..params
                };
                let outcome = filter_outliers(&hole_axes, &params)?;
                removed += outcome.removed;
                axes.push(outcome.kept.iter().map(|&i| hole_axes[i]).collect());
            }
            None => axes.push(hole_axes),
        }
    }
    let samples: Vec<Vec3> = axes.iter().flatten().copied().collect();
    let total: Vec3 = samples.iter().sum();
    let n = samples.len() as f64;

    let first_mean = axes[0].iter().sum::<Vec3>();
    let swing = rotation_between(&Vec3::z(), &first_mean)
        .map_err(|_| CalibError::InvalidDataset("axis estimates of hole 0 cancel out".into()))?;
    let roll = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), opts.initial_roll);
    let (refined, iterations) = refine(swing * roll, &total, n, opts.max_iterations)?;

    // re-express with the starting roll so the output does not drift along
    // the unobservable direction
    let u = refined * Vec3::z();
    let rotation = rotation_between(&Vec3::z(), &u).map(|s| s * roll).unwrap_or(refined);
    let sq: f64 = samples
        .iter()
        .map(|a| angle_between(a, &u).map(|t| t * t).unwrap_or(0.0))
        .sum();
    Ok(OrientationCalibration {
        angles: EulerAngles::from_rotation(&rotation),
        rotation,
        residual_rms: (sq / n).sqrt(),
        removed,
        iterations,
        warnings,
    })
}

/// Damped Gauss-Newton over `(yaw, pitch, roll)` of `anchor · E(angles)`.
/// `sum` is `Σ a_ij` and `n` the sample count; the objective only depends on
/// them through `n − sum · u`.
fn refine(
    start: UnitQuaternion<f64>,
    sum: &Vec3,
    n: f64,
    max_iterations: usize,
) -> Result<(UnitQuaternion<f64>, usize), CalibError> {
    let objective = |q: &UnitQuaternion<f64>| n - sum.dot(&(q * Vec3::z()));

    let mut anchor = UnitQuaternion::identity();
    let mut angles = EulerAngles::from_rotation(&start);
    let mut current = anchor * euler_to_rotation(&angles);
    let mut cost = objective(&current);
    let mut damping = 1e-6 * n;

    for iter in 1..=max_iterations {
        if angles.pitch.abs() > FRAC_PI_2 - PITCH_MARGIN {
            anchor = current;
            angles = EulerAngles::default();
        }
        let u = current * Vec3::z();
        let jac = axis_jacobian(&anchor, &angles);
        let rhs = jac.transpose() * (sum - u * n);
        if rhs.norm() <= 1e-15 * n {
            return Ok((current, iter));
        }
        let normal = jac.transpose() * jac * n;
        let mut accepted = false;
        for _ in 0..60 {
            let lhs = normal + Matrix3::identity() * damping;
            let Some(step) = lhs.lu().solve(&rhs) else {
                damping *= 10.0;
                continue;
            };
            let trial_angles = EulerAngles::new(
                angles.yaw + step.x,
                angles.pitch + step.y,
                angles.roll + step.z,
            );
            let trial = anchor * euler_to_rotation(&trial_angles);
            let trial_cost = objective(&trial);
            if trial_cost <= cost {
                let converged = step.norm() < 1e-14 || cost - trial_cost <= 1e-16 * cost.max(1e-300);
                angles = trial_angles;
                current = trial;
                cost = trial_cost;
                damping = (damping / 3.0).max(1e-12 * n);
                accepted = true;
                if converged {
                    return Ok((current, iter));
                }
                break;
            }
            damping *= 4.0;
        }
        if !accepted {
            // no descent direction left at machine precision
            return Ok((current, iter));
        }
    }
    Err(CalibError::NoConvergence {
        iterations: max_iterations,
    })
}

/// Columns: derivative of `anchor · Rz(ψ) Ry(θ) Rx(φ) · e_z` by ψ, θ, φ.
fn axis_jacobian(anchor: &UnitQuaternion<f64>, a: &EulerAngles) -> Matrix3<f64> {
    let rz = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), a.yaw);
    let ry = UnitQuaternion::from_axis_angle(&Vec3::y_axis(), a.pitch);
    let rx = UnitQuaternion::from_axis_angle(&Vec3::x_axis(), a.roll);
    let ez = Vec3::z();
    let d_yaw = Vec3::z().cross(&(rz * ry * rx * ez));
    let d_pitch = rz * Vec3::y().cross(&(ry * rx * ez));
    let d_roll = rz * ry * Vec3::x().cross(&(rx * ez));
    Matrix3::from_columns(&[anchor * d_yaw, anchor * d_pitch, anchor * d_roll])
}

/// Rotates `calib` about its own tip axis so that, at `button_sample`, the
/// tip frame `y` axis points along `world_button_direction` projected onto
/// the plane normal to the tip axis.
pub fn fix_roll_to_button(
    calib: &Pose,
    button_sample: &Pose,
    world_button_direction: &Vec3,
) -> Result<Pose, CalibError> {
    let world_rot = button_sample.rotation * calib.rotation;
    let z = world_rot * Vec3::z();
    let y = world_rot * Vec3::y();
    let projected = world_button_direction - z * world_button_direction.dot(&z);
    if projected.norm() < 1e-6 {
        return Err(CalibError::DegenerateDirection);
    }
    let angle = y.cross(&projected).dot(&z).atan2(y.dot(&projected));
    let roll = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), angle);
    Ok(Pose::new(calib.rotation * roll, calib.translation))
}
