//! Demonstration evaluation against an ideal waypoint path.
//!
//! A trace expressed in its drawing frame is cut into one sub-trace per
//! segment of the visiting sequence, each sub-trace is resampled against its
//! ideal line, and the cohort is summarized by per-index mean, spread and
//! envelope, an ε-zone histogram and a force spectrum per trace.

mod segment;
mod spectrum;
mod stats;

pub use segment::{resample_segment, segment_trace, SampledPair, SampledSegment, MAX_MISSING_FRACTION};
pub use spectrum::{force_spectrum, resample_uniform, SpectrumSummary, SpectrumThreshold};
pub use stats::{aggregate, epsilon_histogram, Aggregate, EpsilonHistogram, IndexStats, SegmentAggregate};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{TipPoseRecord, Vec3};
use crate::ingest::DemonstrationTrace;

pub type Vec2 = Vector2<f64>;

/// Width of the ε zone around the ideal lines, meters.
pub const DEFAULT_EPSILON: f64 = 0.003;
pub const DEFAULT_POINTS_PER_SEGMENT: usize = 100;
pub const DEFAULT_BIN_WIDTH: f64 = 0.0005;
pub const DEFAULT_THRESHOLD_RATIO: f64 = 0.05;
pub const DEFAULT_WAYPOINT_GATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("waypoint {waypoint} (sequence position {position}) not reached: closest approach {closest:.4} m")]
    WaypointNotReached { waypoint: usize, position: usize, closest: f64 },
    #[error("segment {label}: {missing} of {n} ideal points have no crossing")]
    SegmentUncovered { label: String, missing: usize, n: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("evaluations differ in shape: {0}")]
    ShapeMismatch(String),
    #[error("no errors to summarize")]
    EmptyInput,
    #[error("force signal has {0} samples, at least 8 required")]
    TooShort(usize),
}

/// Waypoints in the drawing-frame plane and the order they are visited in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealPath {
    pub waypoints: Vec<[f64; 2]>,
    pub visiting_sequence: Vec<usize>,
}

impl IdealPath {
    pub fn new(waypoints: Vec<[f64; 2]>, visiting_sequence: Vec<usize>) -> Result<Self, EvalError> {
        let path = Self {
            waypoints,
            visiting_sequence,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.visiting_sequence.len() < 2 {
            return Err(EvalError::InvalidPath("visiting sequence needs at least 2 entries".into()));
        }
        if let Some(&bad) = self.visiting_sequence.iter().find(|&&i| i >= self.waypoints.len()) {
            return Err(EvalError::InvalidPath(format!("waypoint index {bad} out of range")));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::InvalidPath("non-finite waypoint".into()));
        }
        for (k, pair) in self.visiting_sequence.windows(2).enumerate() {
            let (a, b) = (self.point(pair[0]), self.point(pair[1]));
            if (a - b).norm() < 1e-9 {
                return Err(EvalError::InvalidPath(format!("segment {k} has coincident endpoints")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let path: IdealPath = serde_json::from_str(text).map_err(|e| EvalError::InvalidPath(e.to_string()))?;
        path.validate()?;
        Ok(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("path serializes") + "\n"
    }

    pub fn point(&self, index: usize) -> Vec2 {
        Vec2::from(self.waypoints[index])
    }

    /// Waypoint positions in visiting order.
    pub fn sequence_points(&self) -> Vec<Vec2> {
        self.visiting_sequence.iter().map(|&i| self.point(i)).collect()
    }

    pub fn segment_count(&self) -> usize {
        self.visiting_sequence.len() - 1
    }

    pub fn segment(&self, k: usize) -> (Vec2, Vec2) {
        (
            self.point(self.visiting_sequence[k]),
            self.point(self.visiting_sequence[k + 1]),
        )
    }

    pub fn length(&self) -> f64 {
        (0..self.segment_count())
            .map(|k| {
                let (a, b) = self.segment(k);
                (b - a).norm()
            })
            .sum()
    }
}

/// Segment names `A`, `B`, … `Z`, `AA`, `AB`, …
pub fn segment_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// A trace sample in drawing-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePoint {
    pub t: f64,
    pub position: Vec3,
    pub force: Option<f64>,
}

impl FramePoint {
    pub fn xy(&self) -> Vec2 {
        Vec2::new(self.position.x, self.position.y)
    }
}

/// Pairs drawing-frame tip records with optional forces.
pub fn frame_points(points: &[TipPoseRecord], forces: Option<&[f64]>) -> Vec<FramePoint> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| FramePoint {
            t: p.t,
            position: p.position,
            force: forces.map(|f| f[i]),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalOptions {
    pub points_per_segment: usize,
    pub epsilon: f64,
    pub bin_width: f64,
    pub threshold: SpectrumThreshold,
    pub waypoint_gate: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            points_per_segment: DEFAULT_POINTS_PER_SEGMENT,
            epsilon: DEFAULT_EPSILON,
            bin_width: DEFAULT_BIN_WIDTH,
            threshold: SpectrumThreshold::Relative(DEFAULT_THRESHOLD_RATIO),
            waypoint_gate: DEFAULT_WAYPOINT_GATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvaluation {
    pub name: String,
    pub segments: Vec<SampledSegment>,
    pub missing_pairs: usize,
    pub spectrum: Option<SpectrumSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub config: EvalOptions,
    pub path: IdealPath,
    pub traces: Vec<TraceEvaluation>,
    pub aggregate: Aggregate,
    /// Histogram of unsigned errors over every present pair of every trace.
    pub histogram: EpsilonHistogram,
    pub epsilon_fraction: f64,
}

/// Runs the full evaluation on named traces already in drawing-frame coordinates.
pub fn evaluate_cohort(
    traces: &[(String, Vec<FramePoint>)],
    path: &IdealPath,
    opts: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    path.validate()?;
    let mut evaluations = Vec::with_capacity(traces.len());
    for (name, points) in traces {
        let subs = segment_trace(points, path, opts.waypoint_gate)?;
        let segments = subs
            .iter()
            .enumerate()
            .map(|(k, sub)| resample_segment(sub, path.segment(k), opts.points_per_segment, &segment_label(k)))
            .collect::<Result<Vec<_>, _>>()?;
        let spectrum = if points.iter().all(|p| p.force.is_some()) && !points.is_empty() {
            let rec = crate::ingest::ForceRecording {
                samples: points
                    .iter()
                    .map(|p| crate::ingest::ForceSample { t: p.t, fz: p.force.unwrap_or(0.0) })
                    .collect(),
            };
            Some(force_spectrum(&rec, opts.threshold)?)
        } else {
            None
        };
        evaluations.push(TraceEvaluation {
            name: name.clone(),
            missing_pairs: segments.iter().map(|s| s.missing()).sum(),
            segments,
            spectrum,
        });
    }
    let per_trace: Vec<Vec<SampledSegment>> = evaluations.iter().map(|e| e.segments.clone()).collect();
    let aggregate = aggregate(&per_trace)?;
    let errors: Vec<f64> = per_trace
        .iter()
        .flatten()
        .flat_map(|s| s.signed_errors())
        .collect();
    let histogram = epsilon_histogram(&errors, opts.epsilon, opts.bin_width)?;
    Ok(EvaluationReport {
        config: *opts,
        path: path.clone(),
        epsilon_fraction: histogram.epsilon_fraction,
        traces: evaluations,
        aggregate,
        histogram,
    })
}

/// Maps a world-frame trace into a drawing frame and flattens it to frame points.
pub fn trace_in_frame(trace: &DemonstrationTrace, frame: &crate::framing::DrawingFrame) -> Vec<FramePoint> {
    let local = crate::framing::to_frame(frame, &trace.points);
    frame_points(&local, trace.forces.as_deref())
}
