//! Drawing frames from three probed points, and collision boxes from four.
//!
//! Probing order: `p1` on the `+x` axis, `p2` at the origin, `p3` towards
//! `+y`. The `x` axis is kept exact and `y` is re-orthogonalized, since hand
//! probed triangles are never exactly right-angled.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_between, compose, invert, quat_from_xyzw, rotation_from_basis, Pose, TipPoseRecord, Vec3,
};

pub const MIN_PROBE_DISTANCE: f64 = 1e-4;
pub const MIN_PROBE_ANGLE_DEG: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FramingError {
    #[error("probe points closer than {MIN_PROBE_DISTANCE} m")]
    CoincidentPoints,
    #[error("probe points are colinear (angle at origin {angle_deg:.4}°)")]
    ColinearPoints { angle_deg: f64 },
    #[error("fourth box point lies {distance:e} m from the base plane")]
    DegenerateHeight { distance: f64 },
    #[error("frame file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawingFrame {
    pub label: String,
    /// `T_O^F`: the frame expressed in the measuring origin.
    pub transform: Pose,
    pub probe_points: [Vec3; 3],
}

impl DrawingFrame {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

/// Orthonormal axes from the three probes.
fn probe_axes(p1: &Vec3, p2: &Vec3, p3: &Vec3) -> Result<[Vec3; 3], FramingError> {
    let d1 = p1 - p2;
    let d3 = p3 - p2;
    if d1.norm() < MIN_PROBE_DISTANCE
        || d3.norm() < MIN_PROBE_DISTANCE
        || (p1 - p3).norm() < MIN_PROBE_DISTANCE
    {
        return Err(FramingError::CoincidentPoints);
    }
    let angle = angle_between(&d1, &d3).map_err(|_| FramingError::CoincidentPoints)?;
    let angle_deg = angle.to_degrees();
    if !(MIN_PROBE_ANGLE_DEG..=180.0 - MIN_PROBE_ANGLE_DEG).contains(&angle_deg) {
        return Err(FramingError::ColinearPoints { angle_deg });
    }
    let x = d1.normalize();
    let z = x.cross(&d3.normalize()).normalize();
    let y = z.cross(&x).normalize();
    Ok([x, y, z])
}

pub fn identify_frame(p1: &Vec3, p2: &Vec3, p3: &Vec3) -> Result<DrawingFrame, FramingError> {
    let [x, y, z] = probe_axes(p1, p2, p3)?;
    Ok(DrawingFrame {
        label: "F".to_string(),
        transform: Pose::new(rotation_from_basis(&x, &y, &z), *p2),
        probe_points: [*p1, *p2, *p3],
    })
}

/// `(T_O^F)⁻¹ · T_O^P` for each sample; timestamps kept.
pub fn to_frame(frame: &DrawingFrame, points: &[TipPoseRecord]) -> Vec<TipPoseRecord> {
    let inv = invert(&frame.transform);
    points
        .iter()
        .map(|p| TipPoseRecord::new(p.t, &compose(&inv, &p.pose())))
        .collect()
}

/// Inverse of [`to_frame`].
pub fn from_frame(frame: &DrawingFrame, points: &[TipPoseRecord]) -> Vec<TipPoseRecord> {
    points
        .iter()
        .map(|p| TipPoseRecord::new(p.t, &compose(&frame.transform, &p.pose())))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionBox {
    /// Box pose, origin at the centroid.
    pub frame: Pose,
    /// Full side lengths along the box axes, meters.
    pub extents: Vec3,
}

impl CollisionBox {
    pub fn center(&self) -> Vec3 {
        self.frame.translation
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workspace {
    pub boxes: Vec<CollisionBox>,
}

/// `p1 → p2` is an edge along `x`, `p3` fixes the depth along `y`, `p4` the
/// height along `z` (either side of the base plane).
pub fn box_from_points(p1: &Vec3, p2: &Vec3, p3: &Vec3, p4: &Vec3) -> Result<CollisionBox, FramingError> {
    let [x, y, z] = probe_axes(p1, p2, p3)?;
    let length = (p1 - p2).norm();
    let depth = (p3 - p2).dot(&y);
    let height = (p4 - p2).dot(&z);
    if height.abs() < MIN_PROBE_DISTANCE {
        return Err(FramingError::DegenerateHeight { distance: height.abs() });
    }
    let center = p2 + x * (length / 2.0) + y * (depth / 2.0) + z * (height / 2.0);
    Ok(CollisionBox {
        frame: Pose::new(rotation_from_basis(&x, &y, &z), center),
        extents: Vec3::new(length, depth.abs(), height.abs()),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameFile {
    label: String,
    translation: [f64; 3],
    rotation_quat: [f64; 4],
    probe_points: [[f64; 3]; 3],
}

/// Frame file: `{ "label", "translation", "rotation_quat", "probe_points" }`.
pub fn frame_to_json(frame: &DrawingFrame) -> String {
    let file = FrameFile {
        label: frame.label.clone(),
        translation: frame.transform.translation_array(),
        rotation_quat: frame.transform.quat_xyzw(),
        probe_points: frame.probe_points.map(|p| [p.x, p.y, p.z]),
    };
    serde_json::to_string_pretty(&file).expect("frame serializes") + "\n"
}

pub fn frame_from_json(text: &str) -> Result<DrawingFrame, FramingError> {
    let file: FrameFile = serde_json::from_str(text).map_err(|e| FramingError::Format(e.to_string()))?;
    let rotation = quat_from_xyzw(file.rotation_quat).map_err(|e| FramingError::Format(e.to_string()))?;
    Ok(DrawingFrame {
        label: file.label,
        transform: Pose::new(rotation, Vec3::from(file.translation)),
        probe_points: file.probe_points.map(Vec3::from),
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxEntry {
    center: [f64; 3],
    rotation_quat: [f64; 4],
    extents: [f64; 3],
}

/// Workspace file: a JSON list of `{ "center", "rotation_quat", "extents" }`.
pub fn workspace_to_json(ws: &Workspace) -> String {
    let entries: Vec<BoxEntry> = ws
        .boxes
        .iter()
        .map(|b| BoxEntry {
            center: b.frame.translation_array(),
            rotation_quat: b.frame.quat_xyzw(),
            extents: [b.extents.x, b.extents.y, b.extents.z],
        })
        .collect();
    serde_json::to_string_pretty(&entries).expect("workspace serializes") + "\n"
}

pub fn workspace_from_json(text: &str) -> Result<Workspace, FramingError> {
    let entries: Vec<BoxEntry> = serde_json::from_str(text).map_err(|e| FramingError::Format(e.to_string()))?;
    let boxes = entries
        .into_iter()
        .map(|e| {
            if e.extents.iter().any(|&v| !(v > 0.0)) {
                return Err(FramingError::Format("box extents must be positive".into()));
            }
            let rotation = quat_from_xyzw(e.rotation_quat).map_err(|err| FramingError::Format(err.to_string()))?;
            Ok(CollisionBox {
                frame: Pose::new(rotation, Vec3::from(e.center)),
                extents: Vec3::from(e.extents),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Workspace { boxes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Unit, UnitQuaternion};
    use proptest::prelude::*;

    fn arb_rigid() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-1.0f64..1.0), -3.1f64..3.1, prop::array::uniform3(-2.0f64..2.0))
            .prop_filter("axis", |(a, _, _)| a.iter().map(|c| c * c).sum::<f64>() > 1e-2)
            .prop_map(|(a, angle, t)| {
                Pose::new(
                    UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vec3::from(a)), angle),
                    Vec3::from(t),
                )
            })
    }

    fn sample(t: f64, p: Vec3) -> TipPoseRecord {
        TipPoseRecord::new(t, &Pose::from_translation(p))
    }

    #[test]
    fn canonical_triangle_is_identity() {
        let f = identify_frame(&Vec3::x(), &Vec3::zeros(), &Vec3::y()).unwrap();
        assert!(f.transform.rotation.angle() < 1e-15);
        assert_eq!(f.transform.translation, Vec3::zeros());
    }

    #[test]
    fn colinear_and_coincident() {
        let err = identify_frame(&Vec3::x(), &Vec3::zeros(), &(Vec3::x() * 2.0)).unwrap_err();
        assert!(matches!(err, FramingError::ColinearPoints { .. }));
        let err = identify_frame(&Vec3::x(), &Vec3::zeros(), &(-Vec3::x())).unwrap_err();
        assert!(matches!(err, FramingError::ColinearPoints { .. }));
        let err = identify_frame(&Vec3::x(), &Vec3::new(1.0, 0.0, 5e-5), &Vec3::y()).unwrap_err();
        assert_eq!(err, FramingError::CoincidentPoints);
    }

    #[test]
    fn non_right_triangle_keeps_x_exact() {
        let p1 = Vec3::new(0.3, 0.1, 0.0);
        let p2 = Vec3::new(0.1, 0.1, 0.0);
        let p3 = Vec3::new(0.12, 0.4, 0.0);
        let f = identify_frame(&p1, &p2, &p3).unwrap();
        assert_relative_eq!(f.transform.rotation * Vec3::x(), Vec3::x(), epsilon = 1e-12);
        assert_relative_eq!(f.transform.rotation * Vec3::z(), Vec3::z(), epsilon = 1e-12);
    }

    #[test]
    fn to_frame_cases() {
        let f = identify_frame(&Vec3::new(2.0, 1.0, 1.0), &Vec3::new(1.0, 1.0, 1.0), &Vec3::new(1.0, 3.0, 1.0)).unwrap();
        let local = to_frame(&f, &[sample(0.5, Vec3::new(1.0, 1.0, 1.0))]);
        assert_relative_eq!(local[0].position, Vec3::zeros(), epsilon = 1e-15);
        assert_eq!(local[0].t, 0.5);

        let id = identify_frame(&Vec3::x(), &Vec3::zeros(), &Vec3::y()).unwrap();
        let pts = [sample(0.0, Vec3::new(0.1, 0.2, 0.3))];
        assert_relative_eq!(to_frame(&id, &pts)[0].position, pts[0].position, epsilon = 1e-15);
    }

    #[test]
    fn unit_cube_box() {
        let b = box_from_points(&Vec3::x(), &Vec3::zeros(), &Vec3::y(), &Vec3::z()).unwrap();
        assert_relative_eq!(b.extents, Vec3::new(1.0, 1.0, 1.0), epsilon = 1e-15);
        assert_relative_eq!(b.center(), Vec3::new(0.5, 0.5, 0.5), epsilon = 1e-15);
        let below = box_from_points(&Vec3::x(), &Vec3::zeros(), &Vec3::y(), &(-Vec3::z())).unwrap();
        assert_relative_eq!(below.center(), Vec3::new(0.5, 0.5, -0.5), epsilon = 1e-15);
        assert_relative_eq!(below.extents, Vec3::new(1.0, 1.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn flat_box_is_degenerate() {
        let err = box_from_points(&Vec3::x(), &Vec3::zeros(), &Vec3::y(), &Vec3::new(0.5, 0.5, 0.0)).unwrap_err();
        assert!(matches!(err, FramingError::DegenerateHeight { .. }));
    }

    #[test]
    fn frame_and_workspace_files_round_trip() {
        let f = identify_frame(&Vec3::new(0.5, 0.1, 0.2), &Vec3::new(0.1, 0.1, 0.2), &Vec3::new(0.1, 0.6, 0.3))
            .unwrap()
            .with_label("board");
        let back = frame_from_json(&frame_to_json(&f)).unwrap();
        assert_eq!(back.label, "board");
        assert_eq!(back.probe_points, f.probe_points);
        assert!(back.transform.rotation.angle_to(&f.transform.rotation) < 1e-15);

        let ws = Workspace {
            boxes: vec![box_from_points(&Vec3::x(), &Vec3::zeros(), &Vec3::y(), &Vec3::z()).unwrap()],
        };
        let text = workspace_to_json(&ws);
        assert!(text.contains("\"extents\""));
        let back = workspace_from_json(&text).unwrap();
        assert_eq!(back.boxes.len(), 1);
        assert_eq!(back.boxes[0].extents, ws.boxes[0].extents);
        assert!(workspace_from_json("[{\"center\":[0,0,0],\"rotation_quat\":[0,0,0,1],\"extents\":[1,0,1]}]").is_err());
    }

    proptest! {
        #[test]
        fn identify_is_equivariant(g in arb_rigid(), a in prop::array::uniform3(-1.0f64..1.0),
                                   b in prop::array::uniform3(-1.0f64..1.0), c in prop::array::uniform3(-1.0f64..1.0)) {
            let (a, b, c) = (Vec3::from(a), Vec3::from(b), Vec3::from(c));
            let Ok(base) = identify_frame(&a, &b, &c) else { return Ok(()); };
            let moved = identify_frame(&g.transform_point(&a), &g.transform_point(&b), &g.transform_point(&c)).unwrap();
            let expected = compose(&g, &base.transform);
            prop_assert!(moved.transform.rotation.angle_to(&expected.rotation) < 1e-9);
            prop_assert!((moved.transform.translation - expected.translation).norm() < 1e-9);
        }

        #[test]
        fn probes_land_on_canonical_coordinates(a in prop::array::uniform3(-1.0f64..1.0),
                                                b in prop::array::uniform3(-1.0f64..1.0), c in prop::array::uniform3(-1.0f64..1.0)) {
            let (a, b, c) = (Vec3::from(a), Vec3::from(b), Vec3::from(c));
            let Ok(f) = identify_frame(&a, &b, &c) else { return Ok(()); };
            let local = to_frame(&f, &[sample(0.0, a), sample(1.0, b), sample(2.0, c)]);
            prop_assert!(local[1].position.norm() < 1e-9);
            prop_assert!(local[0].position.x > 0.0);
            prop_assert!(local[0].position.y.abs() < 1e-9 && local[0].position.z.abs() < 1e-9);
            prop_assert!(local[2].position.y > 0.0 && local[2].position.z.abs() < 1e-9);
        }

        #[test]
        fn to_from_frame_round_trip(g in arb_rigid(), p in prop::array::uniform3(-1.0f64..1.0)) {
            let f = DrawingFrame { label: "F".into(), transform: g, probe_points: [Vec3::zeros(); 3] };
            let pts = [TipPoseRecord::new(0.25, &Pose::from_translation(Vec3::from(p)))];
            let back = from_frame(&f, &to_frame(&f, &pts));
            prop_assert!((back[0].position - pts[0].position).norm() < 1e-9);
            prop_assert!(back[0].orientation.angle_to(&pts[0].orientation) < 1e-9);
            prop_assert_eq!(back[0].t, 0.25);
        }

        #[test]
        fn box_extents_invariant_under_motion(g in arb_rigid(), s in prop::array::uniform3(0.05f64..2.0)) {
            let pts = [Vec3::new(s[0], 0.0, 0.0), Vec3::zeros(), Vec3::new(0.0, s[1], 0.0), Vec3::new(0.0, 0.0, s[2])];
            let base = box_from_points(&pts[0], &pts[1], &pts[2], &pts[3]).unwrap();
            let m: Vec<Vec3> = pts.iter().map(|p| g.transform_point(p)).collect();
            let moved = box_from_points(&m[0], &m[1], &m[2], &m[3]).unwrap();
            prop_assert!((moved.extents - base.extents).norm() < 1e-9);
            prop_assert!((moved.center() - g.transform_point(&base.center())).norm() < 1e-9);
        }
    }
}
