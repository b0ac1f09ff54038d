use serde::Serialize;

use super::{EvalError, FramePoint, IdealPath, Vec2};

/// More than this fraction of ideal points without a crossing fails a segment.
pub const MAX_MISSING_FRACTION: f64 = 0.2;

/// Vertices this close (along the line) to an ideal point count as crossing it.
const CROSSING_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampledPair {
    /// `P_i` on the ideal line.
    pub ideal_point: [f64; 2],
    /// `P_d` on the demonstrated polyline.
    pub demo_point: [f64; 2],
    /// In-plane perpendicular offset, positive to the left of travel.
    pub signed_error: f64,
    pub z_offset: f64,
    pub force: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledSegment {
    pub label: String,
    /// One entry per ideal point; `None` where the trace never crosses it.
    pub pairs: Vec<Option<SampledPair>>,
}

impl SampledSegment {
    pub fn missing(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_none()).count()
    }

    pub fn signed_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.pairs.iter().flatten().map(|p| p.signed_error)
    }
}

/// Splits a drawing-frame trace into one sub-trace per path segment.
///
/// Walking forward from the previous split, the first run of samples within
/// `gate` of the next interior waypoint is located and the split is placed at
/// its closest sample. Neighboring sub-traces share the split sample. The
/// first and last waypoints must also come within `gate` of their sub-trace.
pub fn segment_trace<'a>(
    points: &'a [FramePoint],
    path: &IdealPath,
    gate: f64,
) -> Result<Vec<&'a [FramePoint]>, EvalError> {
    if points.is_empty() {
        return Err(EvalError::InvalidInput("empty trace".into()));
    }
    path.validate()?;
    let seq = path.sequence_points();
    let m = seq.len();
    let dist = |i: usize, w: &Vec2| (points[i].xy() - w).norm();
    let not_reached = |position: usize, range: std::ops::Range<usize>| {
        let w = &seq[position];
        EvalError::WaypointNotReached {
            waypoint: path.visiting_sequence[position],
            position,
            closest: range.map(|i| dist(i, w)).fold(f64::INFINITY, f64::min),
        }
    };

    let mut splits = vec![0usize];
    let mut cursor = 0usize;
    for (k, w) in seq.iter().enumerate().take(m - 1).skip(1) {
        let start = (cursor..points.len())
            .find(|&i| dist(i, w) <= gate)
            .ok_or_else(|| not_reached(k, cursor..points.len()))?;
        let end = (start..points.len()).find(|&i| dist(i, w) > gate).unwrap_or(points.len());
        let mut best = start;
        for i in start..end {
            if dist(i, w) < dist(best, w) {
                best = i;
            }
        }
        splits.push(best);
        cursor = best;
    }
    splits.push(points.len() - 1);

    let first = (splits[0]..=splits[1]).map(|i| dist(i, &seq[0])).fold(f64::INFINITY, f64::min);
    if first > gate {
        return Err(not_reached(0, splits[0]..splits[1] + 1));
    }
    let last = (splits[m - 2]..=splits[m - 1])
        .map(|i| dist(i, &seq[m - 1]))
        .fold(f64::INFINITY, f64::min);
    if last > gate {
        return Err(not_reached(m - 1, splits[m - 2]..splits[m - 1] + 1));
    }

    Ok(splits.windows(2).map(|w| &points[w[0]..=w[1]]).collect())
}

/// Resamples one sub-trace against the ideal line `a → b` at `n` uniformly
/// spaced points.
///
/// For each ideal point the demonstrated polyline is interpolated at its
/// first crossing of the line normal through that point.
pub fn resample_segment(
    sub: &[FramePoint],
    line: (Vec2, Vec2),
    n: usize,
    label: &str,
) -> Result<SampledSegment, EvalError> {
    if n < 2 {
        return Err(EvalError::InvalidInput(format!("points per segment must be at least 2, got {n}")));
    }
    if sub.len() < 2 {
        return Err(EvalError::InvalidInput(format!("segment {label} has fewer than 2 samples")));
    }
    let (a, b) = line;
    let length = (b - a).norm();
    if length < 1e-12 {
        return Err(EvalError::InvalidInput(format!("segment {label} has zero length")));
    }
    let dir = (b - a) / length;
    let along: Vec<f64> = sub.iter().map(|p| (p.xy() - a).dot(&dir)).collect();

    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let s = length * i as f64 / (n - 1) as f64;
        let crossing = (0..sub.len() - 1).find_map(|k| {
            let (t0, t1) = (along[k], along[k + 1]);
            let lo = t0.min(t1);
            let hi = t0.max(t1);
            if s < lo || s > hi {
                return None;
            }
            let f = if t1 == t0 { 0.0 } else { (s - t0) / (t1 - t0) };
            Some((k, f))
        });
        let crossing = crossing.or_else(|| {
            along
                .iter()
                .position(|&t| (t - s).abs() <= CROSSING_SNAP)
                .map(|k| (k.min(sub.len() - 2), if k == sub.len() - 1 { 1.0 } else { 0.0 }))
        });
        pairs.push(crossing.map(|(k, f)| {
            let (p, q) = (&sub[k], &sub[k + 1]);
            let xy = p.xy() + (q.xy() - p.xy()) * f;
            let z = p.position.z + (q.position.z - p.position.z) * f;
            let force = match (p.force, q.force) {
                (Some(u), Some(v)) => Some(u + (v - u) * f),
                _ => None,
            };
            let ideal = a + dir * s;
            let rel = xy - a;
            SampledPair {
                ideal_point: [ideal.x, ideal.y],
                demo_point: [xy.x, xy.y],
                signed_error: dir.x * rel.y - dir.y * rel.x,
                z_offset: z,
                force,
            }
        }));
    }
    let segment = SampledSegment {
        label: label.to_string(),
        pairs,
    };
    let missing = segment.missing();
    if missing as f64 > MAX_MISSING_FRACTION * n as f64 {
        return Err(EvalError::SegmentUncovered {
            label: label.to_string(),
            missing,
            n,
        });
    }
    Ok(segment)
}
