//! Rigid-body math shared by the calibration, framing and evaluation code.
//!
//! Quaternions are stored and exchanged in `(qx, qy, qz, qw)` order using the
//! Hamilton convention. Distances are meters and angles radians throughout.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector norm below {ZERO_NORM:e}")]
    ZeroVector,
    #[error("quaternion is not finite or has zero norm")]
    InvalidQuaternion,
}

/// A rigid transform: rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a raw `[qx, qy, qz, qw]` quaternion, normalizing it.
    pub fn from_xyzw(quat: [f64; 4], translation: Vec3) -> Result<Self, GeometryError> {
        Ok(Self::new(quat_from_xyzw(quat)?, translation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vec3::zeros())
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        invert(self)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        transform_point(self, p)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// Homogeneous 4x4 matrix form.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation as `[qx, qy, qz, qw]` with `qw >= 0`.
    pub fn quat_xyzw(&self) -> [f64; 4] {
        quat_to_xyzw(&self.rotation)
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// Rotation angle of `self⁻¹ · other`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        compose(&self, &rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        compose(self, rhs)
    }
}

/// `a · b`: applying the result to a point applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: renormalize(a.rotation * b.rotation),
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn invert(pose: &Pose) -> Pose {
    let inv = pose.rotation.inverse();
    Pose {
        rotation: inv,
        translation: -(inv * pose.translation),
    }
}

pub fn transform_point(pose: &Pose, p: &Vec3) -> Vec3 {
    pose.rotation * p + pose.translation
}

/// Yaw (Z), pitch (Y), roll (X), applied intrinsically in that order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }

    pub fn to_rotation(&self) -> UnitQuaternion<f64> {
        euler_to_rotation(self)
    }

    /// Recovers the angle triple of `q`. Away from `pitch = ±π/2` this is the
    /// inverse of [`euler_to_rotation`] up to angle wrapping.
    pub fn from_rotation(q: &UnitQuaternion<f64>) -> Self {
        let (roll, pitch, yaw) = q.euler_angles();
        Self { yaw, pitch, roll }
    }
}

/// `Rz(yaw) · Ry(pitch) · Rx(roll)`.
pub fn euler_to_rotation(a: &EulerAngles) -> UnitQuaternion<f64> {
    let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), a.yaw);
    let ry = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), a.pitch);
    let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), a.roll);
    renormalize(rz * ry * rx)
}

/// Unsigned angle between two vectors in `[0, π]`, via `atan2(|u×v|, u·v)`.
pub fn angle_between(u: &Vec3, v: &Vec3) -> Result<f64, GeometryError> {
    if u.norm() < ZERO_NORM || v.norm() < ZERO_NORM {
        return Err(GeometryError::ZeroVector);
    }
    Ok(u.cross(v).norm().atan2(u.dot(v)))
}

pub fn normalize(v: &Vec3) -> Result<Vec3, GeometryError> {
    let n = v.norm();
    if n < ZERO_NORM {
        return Err(GeometryError::ZeroVector);
    }
    Ok(v / n)
}

pub fn quat_from_xyzw(q: [f64; 4]) -> Result<UnitQuaternion<f64>, GeometryError> {
    let [x, y, z, w] = q;
    let raw = Quaternion::new(w, x, y, z);
    let n = raw.norm();
    if !n.is_finite() || n < ZERO_NORM {
        return Err(GeometryError::InvalidQuaternion);
    }
    // already unit to rounding: keep the bits so parse/write cycles are stable
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(UnitQuaternion::new_unchecked(raw));
    }
    Ok(UnitQuaternion::from_quaternion(raw))
}

/// `[qx, qy, qz, qw]`, sign-canonicalized so that `qw >= 0`.
pub fn quat_to_xyzw(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let c = canonical(q);
    [c.i, c.j, c.k, c.w]
}

/// The representative of `q` with non-negative scalar part.
pub fn canonical(q: &UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        *q
    }
}

/// Smallest rotation mapping direction `from` onto direction `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Result<UnitQuaternion<f64>, GeometryError> {
    let a = normalize(from)?;
    let b = normalize(to)?;
    match UnitQuaternion::rotation_between(&a, &b) {
        Some(q) => Ok(q),
        None => {
            // antiparallel: half turn about any axis orthogonal to `a`
            let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let axis = Unit::new_normalize(a.cross(&helper));
            Ok(UnitQuaternion::from_axis_angle(&axis, std::f64::consts::PI))
        }
    }
}

/// Builds a unit quaternion from a matrix whose columns are an orthonormal
/// right-handed basis.
pub fn rotation_from_basis(x: &Vec3, y: &Vec3, z: &Vec3) -> UnitQuaternion<f64> {
    let m = Matrix3::from_columns(&[*x, *y, *z]);
    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m))
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(q.into_inner())
}

/// A tip pose sample `[t, x, y, z, qx, qy, qz, qw]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipPoseRecord {
    pub t: f64,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

impl TipPoseRecord {
    pub fn new(t: f64, pose: &Pose) -> Self {
        Self {
            t,
            position: pose.translation,
            orientation: pose.rotation,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.orientation, self.position)
    }

    pub fn quat_xyzw(&self) -> [f64; 4] {
        quat_to_xyzw(&self.orientation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rz(angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle)
    }

    fn mat_rx(a: f64) -> Matrix3<f64> {
        Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos())
    }

    fn mat_ry(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos())
    }

    fn mat_rz(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0)
    }

    fn homogeneous(r: Matrix3<f64>, t: Vec3) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform4(-1.0f64..1.0),
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_filter("non-degenerate quaternion", |(q, _)| {
                q.iter().map(|c| c * c).sum::<f64>() > 1e-3
            })
            .prop_map(|(q, t)| Pose::from_xyzw(q, Vec3::from(t)).unwrap())
    }

    fn assert_pose_eq(a: &Pose, b: &Pose, tol: f64) {
        assert!(a.rotation.angle_to(&b.rotation) < tol, "{a:?} vs {b:?}");
        assert!((a.translation - b.translation).norm() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn compose_with_identity() {
        let t = Pose::from_xyzw([0.1, -0.2, 0.3, 0.9], Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_pose_eq(&compose(&Pose::identity(), &t), &t, 1e-15);
        assert_pose_eq(&compose(&t, &invert(&t)), &Pose::identity(), 1e-12);
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let a = Pose::new(rz(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0));
        let b = Pose::from_translation(Vec3::new(0.0, 1.0, 0.0));
        let c = compose(&a, &b);
        // Rz(90°)·(0,1,0) = (−1,0,0) plus (1,0,0)
        assert_relative_eq!(c.translation, Vec3::zeros(), epsilon = 1e-15);

        let expected = homogeneous(mat_rz(FRAC_PI_2), Vec3::new(1.0, 0.0, 0.0))
            * homogeneous(Matrix3::identity(), Vec3::new(0.0, 1.0, 0.0));
        assert_relative_eq!(c.to_homogeneous(), expected, epsilon = 1e-12);
    }

    #[test]
    fn invert_simple_cases() {
        assert_pose_eq(&invert(&Pose::identity()), &Pose::identity(), 1e-15);
        let t = invert(&Pose::from_translation(Vec3::new(1.0, 2.0, 3.0)));
        assert_eq!(t.translation, Vec3::new(-1.0, -2.0, -3.0));
        assert_eq!(t.rotation, UnitQuaternion::identity());
    }

    #[test]
    fn invert_matches_matrix_inverse() {
        let t = Pose::from_xyzw([0.3, 0.5, -0.1, 0.7], Vec3::new(0.4, -1.2, 2.0)).unwrap();
        let inv = t.to_homogeneous().try_inverse().unwrap();
        assert_relative_eq!(invert(&t).to_homogeneous(), inv, epsilon = 1e-12);
    }

    #[test]
    fn transform_point_cases() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(transform_point(&Pose::identity(), &p), p);
        let up = Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(transform_point(&up, &Vec3::zeros()), Vec3::new(0.0, 0.0, 1.0));
        let r = Pose::from_rotation(rz(FRAC_PI_2));
        let q = transform_point(&r, &Vec3::x());
        let oracle = mat_rz(FRAC_PI_2) * Vec3::x();
        assert_relative_eq!(q, oracle, epsilon = 1e-12);
        assert_relative_eq!(q, Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn euler_cases() {
        assert_eq!(
            euler_to_rotation(&EulerAngles::default()).angle_to(&UnitQuaternion::identity()),
            0.0
        );
        assert!(euler_to_rotation(&EulerAngles::new(FRAC_PI_2, 0.0, 0.0)).angle_to(&rz(FRAC_PI_2)) < 1e-15);
        let a = EulerAngles::new(0.3, -0.2, 0.1);
        let oracle = mat_rz(0.3) * mat_ry(-0.2) * mat_rx(0.1);
        let m = euler_to_rotation(&a).to_rotation_matrix().into_inner();
        assert_relative_eq!(m, oracle, epsilon = 1e-14);
    }

    #[test]
    fn angle_between_cases() {
        assert_eq!(angle_between(&Vec3::x(), &Vec3::x()).unwrap(), 0.0);
        assert_relative_eq!(angle_between(&Vec3::x(), &Vec3::y()).unwrap(), FRAC_PI_2);
        // reference π − atan(1e-9); atan(1e-9) equals 1e-9 to within 1e-27
        let a = angle_between(&Vec3::x(), &Vec3::new(-1.0, 1e-9, 0.0)).unwrap();
        assert!((a - (PI - 1e-9)).abs() < 1e-15, "{a}");
        assert_eq!(
            angle_between(&Vec3::zeros(), &Vec3::x()),
            Err(GeometryError::ZeroVector)
        );
        assert_eq!(
            angle_between(&Vec3::x(), &Vec3::new(1e-13, 0.0, 0.0)),
            Err(GeometryError::ZeroVector)
        );
    }

    #[test]
    fn quaternion_is_normalized_on_construction() {
        let p = Pose::from_xyzw([0.0, 0.0, 0.0, 2.0], Vec3::zeros()).unwrap();
        assert_eq!(p.quat_xyzw(), [0.0, 0.0, 0.0, 1.0]);
        assert!(Pose::from_xyzw([0.0; 4], Vec3::zeros()).is_err());
        assert!(Pose::from_xyzw([f64::NAN, 0.0, 0.0, 1.0], Vec3::zeros()).is_err());
    }

    #[test]
    fn canonical_sign() {
        let q = quat_from_xyzw([0.0, 0.0, 0.6, -0.8]).unwrap();
        let c = quat_to_xyzw(&q);
        assert!(c[3] >= 0.0);
        assert_relative_eq!(c[2], -0.6, epsilon = 1e-15);
    }

    #[test]
    fn rotation_between_antiparallel() {
        let q = rotation_between(&Vec3::z(), &(-Vec3::z())).unwrap();
        assert_relative_eq!(q * Vec3::z(), -Vec3::z(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            prop_assert!(left.rotation.angle_to(&right.rotation) < 1e-9);
            prop_assert!((left.translation - right.translation).norm() < 1e-9);
        }

        #[test]
        fn compose_acts_as_sequential_application(a in arb_pose(), b in arb_pose(), p in prop::array::uniform3(-3.0f64..3.0)) {
            let p = Vec3::from(p);
            let lhs = transform_point(&compose(&a, &b), &p);
            let rhs = transform_point(&a, &transform_point(&b, &p));
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }

        #[test]
        fn inverse_cancels(a in arb_pose()) {
            let id = compose(&a, &invert(&a));
            prop_assert!(id.rotation.angle() < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
            let id = compose(&invert(&a), &a);
            prop_assert!(id.rotation.angle() < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
        }

        #[test]
        fn rotation_matrices_are_orthonormal(a in arb_pose()) {
            let m = a.rotation_matrix();
            prop_assert!((m.transpose() * m - Matrix3::identity()).norm() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn euler_round_trip(yaw in -3.1f64..3.1, pitch in -1.5f64..1.5, roll in -3.1f64..3.1) {
            let q = euler_to_rotation(&EulerAngles::new(yaw, pitch, roll));
            let back = EulerAngles::from_rotation(&q).to_rotation();
            prop_assert!(q.angle_to(&back) < 1e-9);
        }

        #[test]
        fn angle_between_symmetric_and_scale_invariant(
            u in prop::array::uniform3(-1.0f64..1.0),
            v in prop::array::uniform3(-1.0f64..1.0),
            s in 0.01f64..100.0,
        ) {
            let (u, v) = (Vec3::from(u), Vec3::from(v));
            prop_assume!(u.norm() > 1e-3 && v.norm() > 1e-3);
            let a = angle_between(&u, &v).unwrap();
            prop_assert!((0.0..=PI).contains(&a));
            prop_assert!((a - angle_between(&v, &u).unwrap()).abs() < 1e-12);
            prop_assert!((a - angle_between(&(u * s), &v).unwrap()).abs() < 1e-12);
            prop_assert!((a - angle_between(&u, &(v * s)).unwrap()).abs() < 1e-12);
        }
    }
}
