use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    CalibrateOrientationArgs, CalibratePositionArgs, CliError, EvaluateArgs, IdentifyFrameArgs, SimulateArgs,
    SnapshotArgs,
};
use crate::calib::{
    calibrate_orientation, calibrate_position, calibrate_position_unfiltered, fix_roll_to_button, read_calibration,
    write_calibration, FilterParams, Hole, OrientationDataset, OrientationOptions, OrientationWarning,
    PositionDataset, TipCalibration,
};
use crate::eval::{evaluate_cohort, trace_in_frame, EvalOptions, IdealPath, SpectrumThreshold};
use crate::framing::{frame_from_json, frame_to_json, identify_frame};
use crate::geometry::{EulerAngles, Pose, TipPoseRecord, Vec3};
use crate::ingest::{
    apply_calibration, parse_pen_events, parse_trace_csv, read_pose_file, snapshot_waypoints, write_pose_csv,
    write_trace_csv, PoseRecording, PoseSample,
};
use crate::synth::{gen_demonstration, gen_orientation_dataset, gen_position_dataset, DemoConfig, ForceProfile, SynthConfig};

const FRAME_ID: &str = "pen";

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(e.to_string()).context(path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(e.to_string()).context(path.display()))
}

fn read_poses(path: &Path) -> Result<PoseRecording, CliError> {
    read_pose_file(path, FRAME_ID).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::input(e.to_string()).context(path.display()))
}

/// Writes to `out` when given, stdout otherwise.
fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::internal(e.to_string()))
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json value serializes") + "\n"
}

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("--{name} must be positive, got {v}")))
    }
}

pub fn cmd_calibrate_position(a: &CalibratePositionArgs) -> Result<(), CliError> {
    let rec = read_poses(&a.poses)?;
    let params = FilterParams {
        neighborhood_radius: a.filter.radius,
        min_neighbors: a.filter.min_neighbors,
    };
    params.validate()?;
    if !(a.min_span_deg.is_finite() && a.min_span_deg >= 0.0) {
        return Err(CliError::input("--min-span-deg must be non-negative"));
    }
    let ds = PositionDataset::new(rec.poses(), a.min_span_deg.to_radians())?;
    let out = if a.filter.no_filter {
        calibrate_position_unfiltered(&ds)?
    } else {
        calibrate_position(&ds, &params)?
    };
    let calib = TipCalibration {
        transform: Pose::from_translation(out.tip_offset),
        position_residual_rms: out.residual_rms,
        orientation_residual_rms: 0.0,
        filtered_outliers: out.removed,
    };
    if let Some(path) = &a.out {
        write_file(path, write_calibration(&calib)?.as_bytes())?;
    }
    let report = json!({
        "config": {
            "poses": a.poses.display().to_string(),
            "filter": !a.filter.no_filter,
            "radius": a.filter.radius,
            "min_neighbors": a.filter.min_neighbors,
            "min_span_deg": a.min_span_deg,
        },
        "samples": ds.len(),
        "tip_offset": arr(&out.tip_offset),
        "pivot": arr(&out.pivot),
        "residual_rms": out.residual_rms,
        "removed": out.removed,
        "kept": out.kept.len(),
    });
    emit(None, &pretty(&report))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HoleEntry {
    axis: [f64; 3],
    poses: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ButtonEntry {
    poses: PathBuf,
    direction: [f64; 3],
    #[serde(default)]
    sample: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HoleManifest {
    holes: Vec<HoleEntry>,
    #[serde(default)]
    button: Option<ButtonEntry>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn cmd_calibrate_orientation(a: &CalibrateOrientationArgs) -> Result<(), CliError> {
    let manifest: HoleManifest = serde_json::from_str(&read_text(&a.manifest)?)
        .map_err(|e| CliError::from(e).context(a.manifest.display()))?;
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let prior = match (&a.prior, &a.translation) {
        (Some(p), _) => read_calibration(&read_text(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        (None, Some(t)) if t.len() != 3 => {
            return Err(CliError::input(format!("--translation needs 3 values, got {}", t.len())))
        }
        (None, Some(t)) => TipCalibration::from_transform(Pose::from_translation(Vec3::new(t[0], t[1], t[2]))),
        (None, None) => return Err(CliError::input("one of --prior or --translation is required")),
    };
    let mut holes = Vec::with_capacity(manifest.holes.len());
    for h in &manifest.holes {
        let rec = read_poses(&resolve(base, &h.poses))?;
        holes.push(Hole {
            reference_axis: Vec3::from(h.axis),
            poses: rec.poses(),
        });
    }
    let ds = OrientationDataset::new(holes)?;
    let filter = FilterParams {
        neighborhood_radius: a.axis_radius,
        min_neighbors: a.axis_min_neighbors,
    };
    if !a.no_filter {
        filter.validate()?;
    }
    let opts = OrientationOptions {
        axis_filter: (!a.no_filter).then_some(filter),
        initial_roll: a.initial_roll,
        max_iterations: a.max_iterations,
    };
    let out = calibrate_orientation(&ds, &opts)?;
    let mut transform = Pose::new(out.rotation, prior.tip_offset());
    if let Some(b) = &manifest.button {
        let rec = read_poses(&resolve(base, &b.poses))?;
        let sample = rec
            .samples
            .get(b.sample)
            .ok_or_else(|| CliError::input(format!("button recording has no sample {}", b.sample)))?;
        transform = fix_roll_to_button(&transform, &sample.pose, &Vec3::from(b.direction))?;
    }
    let calib = TipCalibration {
        transform,
        position_residual_rms: prior.position_residual_rms,
        orientation_residual_rms: out.residual_rms,
        filtered_outliers: prior.filtered_outliers + out.removed,
    };
    let text = write_calibration(&calib)?;
    if let Some(path) = &a.out {
        write_file(path, text.as_bytes())?;
    }
    let warnings: Vec<String> = out
        .warnings
        .iter()
        .map(|w| match w {
            OrientationWarning::DegenerateAxes { spread } => format!(
                "reference axes span only {:.4}°; roll and one tilt direction of the tip axis are unobservable",
                spread.to_degrees()
            ),
        })
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let angles = EulerAngles::from_rotation(&transform.rotation);
    let report = json!({
        "config": {
            "manifest": a.manifest.display().to_string(),
            "prior": a.prior.as_ref().map(|p| p.display().to_string()),
            "translation": a.translation,
            "axis_filter": !a.no_filter,
            "axis_radius": a.axis_radius,
            "axis_min_neighbors": a.axis_min_neighbors,
            "initial_roll": a.initial_roll,
            "max_iterations": a.max_iterations,
        },
        "angles": angles,
        "rotation_quat": transform.quat_xyzw(),
        "approach_axis": arr(&calib.approach_axis()),
        "residual_rms": out.residual_rms,
        "removed": out.removed,
        "iterations": out.iterations,
        "warnings": warnings,
    });
    emit(None, &pretty(&report))
}

#[derive(Serialize, Deserialize)]
struct WaypointEntry {
    t: f64,
    position: [f64; 3],
    rotation_quat: [f64; 4],
}

#[derive(Deserialize)]
struct WaypointFile {
    waypoints: Vec<WaypointEntry>,
}

fn waypoint_entry(r: &TipPoseRecord) -> WaypointEntry {
    WaypointEntry {
        t: r.t,
        position: arr(&r.position),
        rotation_quat: r.quat_xyzw(),
    }
}

pub(crate) fn waypoints_json(config: serde_json::Value, waypoints: &[TipPoseRecord], extra: serde_json::Value) -> String {
    let mut v = json!({
        "config": config,
        "waypoints": waypoints.iter().map(waypoint_entry).collect::<Vec<_>>(),
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
        obj.extend(more);
    }
    pretty(&v)
}

pub fn cmd_identify_frame(a: &IdentifyFrameArgs) -> Result<(), CliError> {
    let file: WaypointFile =
        serde_json::from_str(&read_text(&a.probes)?).map_err(|e| CliError::from(e).context(a.probes.display()))?;
    let p: Vec<Vec3> = file.waypoints.iter().map(|w| Vec3::from(w.position)).collect();
    if p.len() != 3 {
        return Err(CliError::input(format!("expected exactly 3 probe waypoints, found {}", p.len())));
    }
    let frame = identify_frame(&p[0], &p[1], &p[2])?.with_label(a.label.clone());
    emit(a.out.as_deref(), &frame_to_json(&frame))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), CliError> {
    if a.n < 2 {
        return Err(CliError::input("--n must be at least 2"));
    }
    check_positive("epsilon", a.epsilon)?;
    check_positive("bin-width", a.bin_width)?;
    check_positive("gate", a.gate)?;
    let threshold = match a.threshold_abs {
        Some(v) if v.is_finite() && v >= 0.0 => SpectrumThreshold::Absolute(v),
        Some(v) => return Err(CliError::input(format!("--threshold-abs must be non-negative, got {v}"))),
        None if a.threshold_ratio.is_finite() && a.threshold_ratio >= 0.0 => {
            SpectrumThreshold::Relative(a.threshold_ratio)
        }
        None => return Err(CliError::input("--threshold-ratio must be non-negative")),
    };
    let frame = frame_from_json(&read_text(&a.frame)?).map_err(|e| CliError::from(e).context(a.frame.display()))?;
    let path = IdealPath::from_json(&read_text(&a.path)?).map_err(|e| CliError::from(e).context(a.path.display()))?;
    let mut files = a.traces.clone();
    files.sort();
    files.dedup();
    let mut traces = Vec::with_capacity(files.len());
    for f in &files {
        let trace = parse_trace_csv(open(f)?).map_err(|e| CliError::from(e).context(f.display()))?;
        traces.push((f.display().to_string(), trace_in_frame(&trace, &frame)));
    }
    let opts = EvalOptions {
        points_per_segment: a.n,
        epsilon: a.epsilon,
        bin_width: a.bin_width,
        threshold,
        waypoint_gate: a.gate,
    };
    let report = evaluate_cohort(&traces, &path, &opts)?;

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::input(e.to_string()).context(a.out_dir.display()))?;
    let mut value = serde_json::to_value(&report).map_err(|e| CliError::internal(e.to_string()))?;
    value["config"] = json!({
        "traces": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        "frame": a.frame.display().to_string(),
        "path": a.path.display().to_string(),
        "options": report.config,
    });
    write_file(&a.out_dir.join("report.json"), pretty(&value).as_bytes())?;

    let mut agg = String::from("segment,idx,mean,std,env_min,env_max\n");
    for seg in &report.aggregate.segments {
        for (i, s) in seg.stats.iter().enumerate() {
            agg.push_str(&format!(
                "{},{},{},{},{},{}\n",
                seg.label,
                i,
                fmt_opt(s.map(|s| s.mean)),
                fmt_opt(s.map(|s| s.std)),
                fmt_opt(s.map(|s| s.min)),
                fmt_opt(s.map(|s| s.max)),
            ));
        }
    }
    write_file(&a.out_dir.join("aggregate.csv"), agg.as_bytes())?;

    let mut hist = String::from("bin_lo,bin_hi,count\n");
    for ((lo, hi), c) in report.histogram.bin_edges().iter().zip(&report.histogram.counts) {
        hist.push_str(&format!("{lo},{hi},{c}\n"));
    }
    write_file(&a.out_dir.join("histogram.csv"), hist.as_bytes())?;

    for (k, t) in report.traces.iter().enumerate() {
        if let Some(s) = &t.spectrum {
            let mut csv = String::from("freq_hz,amplitude\n");
            for (f, amp) in s.frequencies().iter().zip(&s.amplitudes) {
                csv.push_str(&format!("{f},{amp}\n"));
            }
            write_file(&a.out_dir.join(format!("spectrum_{k}.csv")), csv.as_bytes())?;
        }
    }
    let missing: usize = report.traces.iter().map(|t| t.missing_pairs).sum();
    emit(
        None,
        &format!(
            "traces {} segments {} epsilon_fraction {} missing_pairs {}\n",
            report.traces.len(),
            path.segment_count(),
            report.epsilon_fraction,
            missing
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolePlan {
    pub axes: Vec<[f64; 3]>,
    pub poses_per_hole: usize,
}

impl Default for HolePlan {
    fn default() -> Self {
        let s = 45f64.to_radians().sin();
        let c = 45f64.to_radians().cos();
        Self {
            axes: vec![[0.0, 0.0, 1.0], [s, 0.0, c], [0.0, -s, c]],
            poses_per_hole: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoPlan {
    pub count: usize,
    pub path: IdealPath,
    pub demo: DemoConfig,
}

impl Default for DemoPlan {
    fn default() -> Self {
        Self {
            count: 3,
            path: IdealPath {
                waypoints: vec![[0.0, 0.0], [0.1, 0.0], [0.1, 0.1], [0.0, 0.1], [0.05, 0.05]],
                visiting_sequence: vec![0, 1, 2, 3, 0, 4, 1, 4, 3],
            },
            demo: DemoConfig {
                lateral_noise_std: 0.001,
                force: Some(ForceProfile::Sine {
                    frequency: 2.0,
                    amplitude: 0.5,
                    offset: 3.0,
                }),
                frame: Pose::new(
                    EulerAngles::new(0.3, 0.05, -0.1).to_rotation(),
                    Vec3::new(0.3, 0.2, 0.01),
                ),
                ..DemoConfig::default()
            },
        }
    }
}

/// Everything `simulate` generates, with defaults for any missing part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationPlan {
    pub dataset: SynthConfig,
    /// Seconds between generated pose samples.
    pub sample_interval: f64,
    pub holes: Option<HolePlan>,
    pub demonstrations: Option<DemoPlan>,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            dataset: SynthConfig::default(),
            sample_interval: 0.01,
            holes: Some(HolePlan::default()),
            demonstrations: Some(DemoPlan::default()),
        }
    }
}

fn recording(poses: &[Pose], dt: f64) -> PoseRecording {
    PoseRecording {
        frame_id: FRAME_ID.into(),
        samples: poses
            .iter()
            .enumerate()
            .map(|(i, &pose)| PoseSample { t: i as f64 * dt, pose })
            .collect(),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::internal(e.to_string()))?;
    Ok(buf)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut plan: SimulationPlan = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| CliError::from(e).context(p.display()))?,
        None => SimulationPlan::default(),
    };
    if let Some(seed) = a.seed {
        plan.dataset.seed = seed;
    }
    check_positive("sample_interval", plan.sample_interval)?;
    let dir = &a.out_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::input(e.to_string()).context(dir.display()))?;
    let echo = serde_json::to_value(&plan).map_err(|e| CliError::internal(e.to_string()))?;

    let (ds, truth) = gen_position_dataset(&plan.dataset)?;
    let rec = recording(ds.poses(), plan.sample_interval);
    write_file(&dir.join("position.csv"), &csv_bytes(|b| write_pose_csv(b, &rec))?)?;
    let mut truth_json = serde_json::to_value(&truth).map_err(|e| CliError::internal(e.to_string()))?;
    truth_json["config"] = echo;
    write_file(&dir.join("truth.json"), pretty(&truth_json).as_bytes())?;

    if let Some(h) = &plan.holes {
        let axes: Vec<Vec3> = h.axes.iter().map(|&v| Vec3::from(v)).collect();
        let (ods, _) = gen_orientation_dataset(&plan.dataset, &axes, h.poses_per_hole)?;
        let mut entries = Vec::new();
        for (k, hole) in ods.holes().iter().enumerate() {
            let name = format!("hole_{k}.csv");
            let rec = recording(&hole.poses, plan.sample_interval);
            write_file(&dir.join(&name), &csv_bytes(|b| write_pose_csv(b, &rec))?)?;
            entries.push(json!({ "axis": h.axes[k], "poses": name }));
        }
        write_file(&dir.join("holes.json"), pretty(&json!({ "holes": entries })).as_bytes())?;
    }

    if let Some(d) = &plan.demonstrations {
        write_file(&dir.join("path.json"), d.path.to_json().as_bytes())?;
        let frame = d.demo.frame;
        let probes: Vec<TipPoseRecord> = [Vec3::new(0.1, 0.0, 0.0), Vec3::zeros(), Vec3::new(0.0, 0.1, 0.0)]
            .iter()
            .enumerate()
            .map(|(i, p)| TipPoseRecord::new(i as f64, &Pose::new(frame.rotation, frame.transform_point(p))))
            .collect();
        write_file(&dir.join("probes.json"), waypoints_json(json!({"source": "simulate"}), &probes, json!({})).as_bytes())?;
        let drawing = identify_frame(&probes[0].position, &probes[1].position, &probes[2].position)?;
        write_file(&dir.join("frame.json"), frame_to_json(&drawing).as_bytes())?;
        for k in 0..d.count {
            let cfg = DemoConfig {
                seed: d.demo.seed.wrapping_add(k as u64),
                ..d.demo.clone()
            };
            let trace = gen_demonstration(&d.path, &cfg)?;
            write_file(&dir.join(format!("demo_{k}.csv")), &csv_bytes(|b| write_trace_csv(b, &trace))?)?;
        }
    }
    emit(None, &format!("wrote {}\n", dir.display()))
}

pub fn cmd_snapshot(a: &SnapshotArgs) -> Result<(), CliError> {
    if !(a.guard.is_finite() && a.guard >= 0.0) {
        return Err(CliError::input("--guard must be non-negative"));
    }
    let rec = read_poses(&a.poses)?;
    let log = parse_pen_events(open(&a.events)?).map_err(|e| CliError::from(e).context(a.events.display()))?;
    let calib = read_calibration(&read_text(&a.calibration)?)
        .map_err(|e| CliError::from(e).context(a.calibration.display()))?;
    let tips = apply_calibration(&rec, &calib);
    let list = snapshot_waypoints(&tips, &log.events, a.guard)?;
    if log.warnings > 0 {
        eprintln!("warning: {} unrecognized event lines skipped", log.warnings);
    }
    let config = json!({
        "poses": a.poses.display().to_string(),
        "events": a.events.display().to_string(),
        "calibration": a.calibration.display().to_string(),
        "guard": a.guard,
    });
    let text = waypoints_json(config, &list.waypoints, json!({ "skipped_event_lines": log.warnings }));
    emit(a.out.as_deref(), &text)
}
