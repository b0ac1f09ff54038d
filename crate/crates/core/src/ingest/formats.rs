use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim};
use serde::Deserialize;

use super::{
    DemonstrationTrace, ForceRecording, ForceSample, IngestError, PoseRecording, PoseSample,
    TraceSource,
};
use crate::geometry::{quat_from_xyzw, GeometryError, Pose, TipPoseRecord, Vec3};

const POSE_HEADER: [&str; 8] = ["t", "x", "y", "z", "qx", "qy", "qz", "qw"];
const FORCE_HEADER: [&str; 2] = ["t", "Fz"];

/// Rows of a headered CSV, each tagged with its 1-based line number.
fn read_rows<R: Read>(reader: R) -> Result<(StringRecord, Vec<(u64, StringRecord)>), IngestError> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut header = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            IngestError::format(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if header.is_none() {
            header = Some(rec);
        } else {
            rows.push((line, rec));
        }
    }
    let header = header.ok_or_else(|| IngestError::format(1, "empty input"))?;
    Ok((header, rows))
}

fn check_header(header: &StringRecord, expected: &[&str]) -> Result<(), IngestError> {
    if header.iter().ne(expected.iter().copied()) {
        return Err(IngestError::format(
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn parse_fields<const N: usize>(line: u64, rec: &StringRecord) -> Result<[f64; N], IngestError> {
    if rec.len() != N {
        return Err(IngestError::format(
            line,
            format!("expected {N} columns, found {}", rec.len()),
        ));
    }
    let mut out = [0.0; N];
    for (slot, field) in out.iter_mut().zip(rec.iter()) {
        let v: f64 = field
            .parse()
            .map_err(|_| IngestError::format(line, format!("invalid number `{field}`")))?;
        if !v.is_finite() {
            return Err(IngestError::format(line, format!("non-finite value `{field}`")));
        }
        *slot = v;
    }
    Ok(out)
}

fn pose_from_fields(line: u64, f: &[f64]) -> Result<Pose, IngestError> {
    let q = quat_from_xyzw([f[3], f[4], f[5], f[6]]).map_err(|e: GeometryError| {
        IngestError::format(line, e.to_string())
    })?;
    Ok(Pose::new(q, Vec3::new(f[0], f[1], f[2])))
}

fn check_time(prev: Option<f64>, t: f64, line: u64) -> Result<(), IngestError> {
    match prev {
        Some(p) if t <= p => Err(IngestError::NonMonotonicTime { line }),
        _ => Ok(()),
    }
}

/// Parses `t,x,y,z,qx,qy,qz,qw` rows. Quaternions are normalized.
pub fn parse_pose_csv<R: Read>(reader: R, frame_id: &str) -> Result<PoseRecording, IngestError> {
    let (header, rows) = read_rows(reader)?;
    check_header(&header, &POSE_HEADER)?;
    if rows.is_empty() {
        return Err(IngestError::format(2, "empty body"));
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev = None;
    for (line, rec) in &rows {
        let f: [f64; 8] = parse_fields(*line, rec)?;
        check_time(prev, f[0], *line)?;
        prev = Some(f[0]);
        samples.push(PoseSample {
            t: f[0],
            pose: pose_from_fields(*line, &f[1..])?,
        });
    }
    Ok(PoseRecording {
        frame_id: frame_id.to_string(),
        samples,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseRow {
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    qw: f64,
}

/// JSON-lines variant of [`parse_pose_csv`]: one object per line with the
/// same field names.
pub fn parse_pose_jsonl<R: BufRead>(reader: R, frame_id: &str) -> Result<PoseRecording, IngestError> {
    let mut samples = Vec::new();
    let mut prev = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PoseRow = serde_json::from_str(&line)
            .map_err(|e| IngestError::format(line_no, e.to_string()))?;
        let f = [row.t, row.x, row.y, row.z, row.qx, row.qy, row.qz, row.qw];
        if f.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::format(line_no, "non-finite value"));
        }
        check_time(prev, row.t, line_no)?;
        prev = Some(row.t);
        samples.push(PoseSample {
            t: row.t,
            pose: pose_from_fields(line_no, &f[1..])?,
        });
    }
    if samples.is_empty() {
        return Err(IngestError::format(1, "empty input"));
    }
    Ok(PoseRecording {
        frame_id: frame_id.to_string(),
        samples,
    })
}

/// Reads a pose recording, choosing JSON-lines for `.jsonl` files and CSV otherwise.
pub fn read_pose_file(path: &Path, frame_id: &str) -> Result<PoseRecording, IngestError> {
    let file = File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => parse_pose_jsonl(BufReader::new(file), frame_id),
        _ => parse_pose_csv(file, frame_id),
    }
}

pub fn parse_force_csv<R: Read>(reader: R) -> Result<ForceRecording, IngestError> {
    let (header, rows) = read_rows(reader)?;
    check_header(&header, &FORCE_HEADER)?;
    if rows.is_empty() {
        return Err(IngestError::format(2, "empty body"));
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut prev = None;
    for (line, rec) in &rows {
        let [t, fz]: [f64; 2] = parse_fields(*line, rec)?;
        check_time(prev, t, *line)?;
        prev = Some(t);
        samples.push(ForceSample { t, fz });
    }
    Ok(ForceRecording { samples })
}

/// Parses a tip trace. Accepted headers are `t,x,y,z,Fz`,
/// `t,x,y,z,qx,qy,qz,qw` and `t,x,y,z,qx,qy,qz,qw,Fz`.
pub fn parse_trace_csv<R: Read>(reader: R) -> Result<DemonstrationTrace, IngestError> {
    let (header, rows) = read_rows(reader)?;
    let cols: Vec<&str> = header.iter().collect();
    let (has_quat, has_force) = match cols.as_slice() {
        ["t", "x", "y", "z", "Fz"] => (false, true),
        ["t", "x", "y", "z", "qx", "qy", "qz", "qw"] => (true, false),
        ["t", "x", "y", "z", "qx", "qy", "qz", "qw", "Fz"] => (true, true),
        _ => {
            return Err(IngestError::format(
                1,
                "expected header `t,x,y,z,Fz`, `t,x,y,z,qx,qy,qz,qw` or `t,x,y,z,qx,qy,qz,qw,Fz`",
            ))
        }
    };
    if rows.is_empty() {
        return Err(IngestError::format(2, "empty body"));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut forces = Vec::new();
    let mut prev = None;
    for (line, rec) in &rows {
        let f: Vec<f64> = match (has_quat, has_force) {
            (false, _) => parse_fields::<5>(*line, rec)?.to_vec(),
            (true, false) => parse_fields::<8>(*line, rec)?.to_vec(),
            (true, true) => parse_fields::<9>(*line, rec)?.to_vec(),
        };
        check_time(prev, f[0], *line)?;
        prev = Some(f[0]);
        let pose = if has_quat {
            pose_from_fields(*line, &f[1..8])?
        } else {
            Pose::from_translation(Vec3::new(f[1], f[2], f[3]))
        };
        points.push(TipPoseRecord::new(f[0], &pose));
        if has_force {
            forces.push(*f.last().unwrap());
        }
    }
    Ok(DemonstrationTrace {
        points,
        forces: has_force.then_some(forces),
        source: TraceSource::Stylus,
        clamped_force: Vec::new(),
    })
}

pub fn write_pose_csv<W: Write>(mut w: W, rec: &PoseRecording) -> std::io::Result<()> {
    writeln!(w, "{}", POSE_HEADER.join(","))?;
    for s in &rec.samples {
        let p = s.pose.translation;
        let [qx, qy, qz, qw] = s.pose.quat_xyzw();
        writeln!(w, "{},{},{},{},{},{},{},{}", s.t, p.x, p.y, p.z, qx, qy, qz, qw)?;
    }
    Ok(())
}

pub fn write_force_csv<W: Write>(mut w: W, rec: &ForceRecording) -> std::io::Result<()> {
    writeln!(w, "{}", FORCE_HEADER.join(","))?;
    for s in &rec.samples {
        writeln!(w, "{},{}", s.t, s.fz)?;
    }
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, trace: &DemonstrationTrace) -> std::io::Result<()> {
    match &trace.forces {
        Some(_) => writeln!(w, "t,x,y,z,qx,qy,qz,qw,Fz")?,
        None => writeln!(w, "t,x,y,z,qx,qy,qz,qw")?,
    }
    for (i, p) in trace.points.iter().enumerate() {
        let [qx, qy, qz, qw] = p.quat_xyzw();
        let x = p.position;
        write!(w, "{},{},{},{},{},{},{},{}", p.t, x.x, x.y, x.z, qx, qy, qz, qw)?;
        match &trace.forces {
            Some(f) => writeln!(w, ",{}", f[i])?,
            None => writeln!(w)?,
        }
    }
    Ok(())
}
