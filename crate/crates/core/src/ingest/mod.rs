//! Recordings in, tip-space demonstrations and snapshot waypoints out.

mod events;
mod formats;

pub use events::{parse_pen_events, PenEvent, PenEventKind, PenEventLog};
pub use formats::{
    parse_force_csv, parse_pose_csv, parse_pose_jsonl, parse_trace_csv, read_pose_file,
    write_force_csv, write_pose_csv, write_trace_csv,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::TipCalibration;
use crate::geometry::{compose, Pose, TipPoseRecord};

/// Default tolerance for button presses just outside the recording span.
pub const DEFAULT_SNAPSHOT_GUARD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {reason}")]
    Format { line: u64, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotonicTime { line: u64 },
    #[error("button press at t={t} s lies outside the recording [{start}, {end}]")]
    EventOutsideRecording { t: f64, start: f64, end: f64 },
    #[error("pose and force recordings do not overlap in time")]
    NoOverlap,
    #[error("empty recording")]
    EmptyRecording,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IngestError {
    pub(crate) fn format(line: u64, reason: impl Into<String>) -> Self {
        IngestError::Format {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub pose: Pose,
}

/// Fiducial (or flange) poses measured in the `frame_id` origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecording {
    pub frame_id: String,
    pub samples: Vec<PoseSample>,
}

impl PoseRecording {
    pub fn poses(&self) -> Vec<Pose> {
        self.samples.iter().map(|s| s.pose).collect()
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.t, self.samples.last()?.t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceSample {
    pub t: f64,
    pub fz: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForceRecording {
    pub samples: Vec<ForceSample>,
}

impl ForceRecording {
    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.t, self.samples.last()?.t))
    }

    /// Linear interpolation, holding the endpoint values outside the span.
    /// Returns the value and whether it was clamped.
    pub fn value_at(&self, t: f64) -> Option<(f64, bool)> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t <= first.t {
            return Some((first.fz, t < first.t));
        }
        if t >= last.t {
            return Some((last.fz, t > last.t));
        }
        let hi = self.samples.partition_point(|s| s.t <= t);
        let (a, b) = (self.samples[hi - 1], self.samples[hi]);
        let f = (t - a.t) / (b.t - a.t);
        Some((a.fz + f * (b.fz - a.fz), false))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSource {
    #[default]
    Stylus,
    Robot,
}

/// Tip poses with optional per-point contact force.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationTrace {
    pub points: Vec<TipPoseRecord>,
    pub forces: Option<Vec<f64>>,
    pub source: TraceSource,
    /// Indices whose force was held at a recording endpoint.
    pub clamped_force: Vec<usize>,
}

impl DemonstrationTrace {
    pub fn new(points: Vec<TipPoseRecord>) -> Self {
        Self {
            points,
            forces: None,
            source: TraceSource::Stylus,
            clamped_force: Vec::new(),
        }
    }

    pub fn force_recording(&self) -> Option<ForceRecording> {
        let forces = self.forces.as_ref()?;
        Some(ForceRecording {
            samples: self
                .points
                .iter()
                .zip(forces)
                .map(|(p, &fz)| ForceSample { t: p.t, fz })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WaypointList {
    pub waypoints: Vec<TipPoseRecord>,
}

/// Maps every fiducial sample through `T_W^P = T_W^I · T_I^P`.
pub fn apply_calibration(rec: &PoseRecording, calib: &TipCalibration) -> Vec<TipPoseRecord> {
    rec.samples
        .iter()
        .map(|s| TipPoseRecord::new(s.t, &compose(&s.pose, &calib.transform)))
        .collect()
}

/// One waypoint per button press: the tip record nearest in time, the
/// earlier one on ties.
pub fn snapshot_waypoints(
    tips: &[TipPoseRecord],
    events: &[PenEvent],
    guard: f64,
) -> Result<WaypointList, IngestError> {
    let (start, end) = match (tips.first(), tips.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(IngestError::EmptyRecording),
    };
    let mut waypoints = Vec::new();
    for ev in events.iter().filter(|e| e.kind == PenEventKind::ButtonPress) {
        if ev.t < start - guard || ev.t > end + guard {
            return Err(IngestError::EventOutsideRecording { t: ev.t, start, end });
        }
        let hi = tips.partition_point(|p| p.t < ev.t);
        let idx = if hi == 0 {
            0
        } else if hi == tips.len() {
            tips.len() - 1
        } else if ev.t - tips[hi - 1].t <= tips[hi].t - ev.t {
            hi - 1
        } else {
            hi
        };
        waypoints.push(tips[idx]);
    }
    Ok(WaypointList { waypoints })
}

/// Pairs each tip point with the force interpolated at its timestamp.
pub fn pair_force(
    tips: &[TipPoseRecord],
    force: &ForceRecording,
) -> Result<DemonstrationTrace, IngestError> {
    let (f0, f1) = force.span().ok_or(IngestError::NoOverlap)?;
    let (t0, t1) = match (tips.first(), tips.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(IngestError::EmptyRecording),
    };
    if t1 < f0 || t0 > f1 {
        return Err(IngestError::NoOverlap);
    }
    let mut forces = Vec::with_capacity(tips.len());
    let mut clamped = Vec::new();
    for (i, p) in tips.iter().enumerate() {
        let (v, was_clamped) = force.value_at(p.t).ok_or(IngestError::NoOverlap)?;
        if was_clamped {
            clamped.push(i);
        }
        forces.push(v);
    }
    Ok(DemonstrationTrace {
        points: tips.to_vec(),
        forces: Some(forces),
        source: TraceSource::Stylus,
        clamped_force: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use nalgebra::UnitQuaternion;

    fn tip(t: f64, x: f64) -> TipPoseRecord {
        TipPoseRecord {
            t,
            position: Vec3::new(x, 0.0, 0.0),
            orientation: UnitQuaternion::identity(),
        }
    }

    fn press(t: f64) -> PenEvent {
        PenEvent {
            t,
            kind: PenEventKind::ButtonPress,
        }
    }

    fn recording(poses: Vec<Pose>) -> PoseRecording {
        PoseRecording {
            frame_id: "world".into(),
            samples: poses
                .into_iter()
                .enumerate()
                .map(|(i, pose)| PoseSample { t: i as f64 * 0.01, pose })
                .collect(),
        }
    }

    #[test]
    fn identity_calibration_is_identity() {
        let pose = Pose::from_xyzw([0.1, 0.2, 0.3, 0.9], Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let rec = recording(vec![pose, Pose::identity()]);
        let out = apply_calibration(&rec, &TipCalibration::identity());
        assert_eq!(out[0].position, pose.translation);
        assert!(out[0].orientation.angle_to(&pose.rotation) < 1e-15);
        assert_eq!(out[1].position, Vec3::zeros());
    }

    #[test]
    fn tip_offset_shifts_positions() {
        let rec = recording(vec![
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
            Pose::from_translation(Vec3::new(0.0, 2.0, 0.5)),
        ]);
        let calib = TipCalibration::from_transform(Pose::from_translation(Vec3::new(0.0, 0.0, -0.1)));
        let out = apply_calibration(&rec, &calib);
        assert_eq!(out[0].position, Vec3::new(1.0, 0.0, -0.1));
        assert_eq!(out[1].position, Vec3::new(0.0, 2.0, 0.4));
    }

    #[test]
    fn snapshot_exact_match_and_empty() {
        let tips: Vec<_> = (0..10).map(|i| tip(i as f64 * 0.01, i as f64)).collect();
        let wl = snapshot_waypoints(&tips, &[press(0.03)], DEFAULT_SNAPSHOT_GUARD).unwrap();
        assert_eq!(wl.waypoints, vec![tips[3]]);
        let wl = snapshot_waypoints(&tips, &[], DEFAULT_SNAPSHOT_GUARD).unwrap();
        assert!(wl.waypoints.is_empty());
    }

    #[test]
    fn snapshot_tie_goes_to_earlier_sample() {
        let tips: Vec<_> = (0..10).map(|i| tip(i as f64 * 0.25, i as f64)).collect();
        let wl = snapshot_waypoints(&tips, &[press(0.625)], DEFAULT_SNAPSHOT_GUARD).unwrap();
        assert_eq!(wl.waypoints[0].t, 0.5);
        let wl = snapshot_waypoints(&tips, &[press(0.626)], DEFAULT_SNAPSHOT_GUARD).unwrap();
        assert_eq!(wl.waypoints[0].t, 0.75);
    }

    #[test]
    fn snapshot_ignores_release_and_power() {
        let tips: Vec<_> = (0..10).map(|i| tip(i as f64 * 0.01, i as f64)).collect();
        let events = [
            PenEvent { t: 0.0, kind: PenEventKind::PowerOn },
            press(0.02),
            PenEvent { t: 0.03, kind: PenEventKind::ButtonRelease },
            press(0.08),
        ];
        let wl = snapshot_waypoints(&tips, &events, DEFAULT_SNAPSHOT_GUARD).unwrap();
        assert_eq!(wl.waypoints.len(), 2);
    }

    #[test]
    fn snapshot_outside_guard() {
        let tips: Vec<_> = (0..10).map(|i| tip(1.0 + i as f64 * 0.01, 0.0)).collect();
        assert!(snapshot_waypoints(&tips, &[press(0.95)], DEFAULT_SNAPSHOT_GUARD).is_ok());
        let err = snapshot_waypoints(&tips, &[press(0.85)], DEFAULT_SNAPSHOT_GUARD).unwrap_err();
        assert!(matches!(err, IngestError::EventOutsideRecording { .. }));
        let err = snapshot_waypoints(&tips, &[press(1.3)], DEFAULT_SNAPSHOT_GUARD).unwrap_err();
        assert!(matches!(err, IngestError::EventOutsideRecording { .. }));
    }

    #[test]
    fn pair_constant_and_ramp() {
        let tips = vec![tip(0.0, 0.0), tip(0.5, 0.0), tip(1.0, 0.0)];
        let constant = ForceRecording {
            samples: vec![ForceSample { t: 0.0, fz: 2.0 }, ForceSample { t: 1.0, fz: 2.0 }],
        };
        let trace = pair_force(&tips, &constant).unwrap();
        assert_eq!(trace.forces.unwrap(), vec![2.0, 2.0, 2.0]);
        assert!(trace.clamped_force.is_empty());

        let ramp = ForceRecording {
            samples: vec![ForceSample { t: 0.0, fz: 0.0 }, ForceSample { t: 1.0, fz: 1.0 }],
        };
        let trace = pair_force(&tips, &ramp).unwrap();
        assert_eq!(trace.forces.unwrap()[1], 0.5);
    }

    #[test]
    fn pair_flags_points_outside_force_span() {
        let tips = vec![tip(0.0, 0.0), tip(0.5, 0.0), tip(2.0, 0.0)];
        let force = ForceRecording {
            samples: vec![ForceSample { t: 0.25, fz: 1.0 }, ForceSample { t: 1.0, fz: 3.0 }],
        };
        let trace = pair_force(&tips, &force).unwrap();
        assert_eq!(trace.forces.unwrap(), vec![1.0, 1.0 + 2.0 * (0.25 / 0.75), 3.0]);
        assert_eq!(trace.clamped_force, vec![0, 2]);
    }

    #[test]
    fn pair_disjoint_is_error() {
        let tips = vec![tip(0.0, 0.0), tip(1.0, 0.0)];
        let force = ForceRecording {
            samples: vec![ForceSample { t: 2.0, fz: 1.0 }, ForceSample { t: 3.0, fz: 1.0 }],
        };
        assert!(matches!(pair_force(&tips, &force), Err(IngestError::NoOverlap)));
    }
}
