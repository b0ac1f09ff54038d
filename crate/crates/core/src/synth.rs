//! Seeded synthetic datasets with known ground truth.
//!
//! Every generator draws from `ChaCha8Rng` (the `rand_chacha` crate) seeded
//! with `seed_from_u64`, one numbered stream per purpose, so a seed yields
//! the same bytes on every platform and, for example, enabling outliers
//! does not change the inlier noise.

use nalgebra::{Unit, UnitQuaternion};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::{Hole, OrientationDataset, PositionDataset};
use crate::eval::{IdealPath, Vec2};
use crate::geometry::{quat_from_xyzw, rotation_between, Pose, TipPoseRecord, Vec3};
use crate::ingest::{DemonstrationTrace, TraceSource};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

const STREAM_ROTATIONS: u64 = 0;
const STREAM_POSITION_NOISE: u64 = 1;
const STREAM_ROTATION_NOISE: u64 = 2;
const STREAM_OUTLIER_PICK: u64 = 3;
const STREAM_OUTLIER_DIRECTION: u64 = 4;
const STREAM_SPIN: u64 = 5;
const STREAM_LATERAL: u64 = 6;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

mod pose_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct PoseFile {
        translation: [f64; 3],
        rotation_quat: [f64; 4],
    }

    pub fn serialize<S: Serializer>(pose: &Pose, s: S) -> Result<S::Ok, S::Error> {
        PoseFile {
            translation: pose.translation_array(),
            rotation_quat: pose.quat_xyzw(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose, D::Error> {
        let f = PoseFile::deserialize(d)?;
        let q = quat_from_xyzw(f.rotation_quat).map_err(serde::de::Error::custom)?;
        Ok(Pose::new(q, Vec3::from(f.translation)))
    }
}

mod vec_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        Ok(Vec3::from(<[f64; 3]>::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// `T_I^P` to be recovered.
    #[serde(with = "pose_serde")]
    pub true_calibration: Pose,
    #[serde(with = "vec_serde")]
    pub pivot_point: Vec3,
    pub sample_count: usize,
    /// Full width of the sampled rotation angles, radians.
    pub rotation_span: f64,
    pub position_noise_std: f64,
    pub orientation_noise_std: f64,
    pub outlier_rate: f64,
    pub outlier_magnitude: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            true_calibration: Pose::from_translation(Vec3::new(0.0, 0.0, -0.12)),
            pivot_point: Vec3::new(0.4, -0.1, 0.05),
            sample_count: 200,
            rotation_span: 120f64.to_radians(),
            position_noise_std: 0.0,
            orientation_noise_std: 0.0,
            outlier_rate: 0.0,
            outlier_magnitude: 0.05,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        for (name, v) in [
            ("position_noise_std", self.position_noise_std),
            ("orientation_noise_std", self.orientation_noise_std),
            ("outlier_magnitude", self.outlier_magnitude),
            ("outlier_rate", self.outlier_rate),
            ("rotation_span", self.rotation_span),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.outlier_rate >= 0.5 {
            return bad(format!("outlier_rate must be below 0.5, got {}", self.outlier_rate));
        }
        if self.sample_count == 0 {
            return bad("sample_count must be positive".into());
        }
        if !self.pivot_point.iter().chain(self.true_calibration.translation.iter()).all(|v| v.is_finite()) {
            return bad("non-finite pivot or calibration".into());
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_rate * self.sample_count as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    #[serde(with = "pose_serde")]
    pub calibration: Pose,
    #[serde(with = "vec_serde")]
    pub pivot_point: Vec3,
    /// Sorted indices of displaced samples.
    pub outlier_indices: Vec<usize>,
}

fn random_rotation(rng: &mut ChaCha8Rng, angle: f64) -> UnitQuaternion<f64> {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle)
}

struct Noise {
    position: Option<(Normal<f64>, ChaCha8Rng)>,
    rotation: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl Noise {
    fn new(cfg: &SynthConfig, salt: u64) -> Self {
        let make = |std: f64, id: u64| {
            (std > 0.0).then(|| (Normal::new(0.0, std).expect("finite std"), stream(cfg.seed, id + salt)))
        };
        Self {
            position: make(cfg.position_noise_std, STREAM_POSITION_NOISE),
            rotation: make(cfg.orientation_noise_std, STREAM_ROTATION_NOISE),
        }
    }

    fn apply(&mut self, pose: &mut Pose) {
        if let Some((d, rng)) = &mut self.position {
            pose.translation += Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
        }
        if let Some((d, rng)) = &mut self.rotation {
            let angle = d.sample(rng);
            pose.rotation = random_rotation(rng, angle) * pose.rotation;
        }
    }
}

/// Pivoting poses whose true tip lands on `pivot_point`, then noise and outliers.
pub fn gen_position_dataset(cfg: &SynthConfig) -> Result<(PositionDataset, GroundTruth), SynthError> {
    cfg.validate()?;
    let mut rot_rng = stream(cfg.seed, STREAM_ROTATIONS);
    let mut noise = Noise::new(cfg, 0);
    let p = cfg.true_calibration.translation;
    let half = cfg.rotation_span / 2.0;
    let mut poses: Vec<Pose> = (0..cfg.sample_count)
        .map(|_| {
            let angle = if half > 0.0 { rot_rng.random_range(-half..=half) } else { 0.0 };
            let r = random_rotation(&mut rot_rng, angle);
            let mut pose = Pose::new(r, cfg.pivot_point - r * p);
            noise.apply(&mut pose);
            pose
        })
        .collect();

    let mut pick = stream(cfg.seed, STREAM_OUTLIER_PICK);
    let mut outliers = sample(&mut pick, cfg.sample_count, cfg.outlier_count()).into_vec();
    outliers.sort_unstable();
    let mut dir_rng = stream(cfg.seed, STREAM_OUTLIER_DIRECTION);
    for &i in &outliers {
        let d: [f64; 3] = UnitSphere.sample(&mut dir_rng);
        poses[i].translation += Vec3::from(d) * cfg.outlier_magnitude;
    }

    let ds = PositionDataset::new(poses, 0.0).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((
        ds,
        GroundTruth {
            calibration: cfg.true_calibration,
            pivot_point: cfg.pivot_point,
            outlier_indices: outliers,
        },
    ))
}

/// Holes placed 5 cm apart along world `x`, starting at `pivot_point`.
pub fn hole_position(cfg: &SynthConfig, index: usize) -> Vec3 {
    cfg.pivot_point + Vec3::new(0.05 * index as f64, 0.0, 0.0)
}

/// Poses seated in each hole, spun about its axis, so that the true tip `z`
/// axis coincides with the hole axis.
///
/// Noise as configured; outliers and rotation span are not used.
pub fn gen_orientation_dataset(
    cfg: &SynthConfig,
    hole_axes: &[Vec3],
    poses_per_hole: usize,
) -> Result<(OrientationDataset, GroundTruth), SynthError> {
    cfg.validate()?;
    if hole_axes.is_empty() {
        return Err(SynthError::InvalidConfig("at least one hole axis required".into()));
    }
    if poses_per_hole < 3 {
        return Err(SynthError::InvalidConfig("at least 3 poses per hole required".into()));
    }
    let truth_axis = cfg.true_calibration.rotation * Vec3::z();
    let mut spin = stream(cfg.seed, STREAM_SPIN);
    let mut noise = Noise::new(cfg, 100);
    let mut holes = Vec::with_capacity(hole_axes.len());
    for (h, axis) in hole_axes.iter().enumerate() {
        let axis = crate::geometry::normalize(axis).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        let align = rotation_between(&truth_axis, &axis).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
        let seat = hole_position(cfg, h);
        let poses = (0..poses_per_hole)
            .map(|_| {
                let theta = spin.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let r = UnitQuaternion::from_axis_angle(&Unit::new_unchecked(axis), theta) * align;
                let mut pose = Pose::new(r, seat - r * cfg.true_calibration.translation);
                noise.apply(&mut pose);
                pose
            })
            .collect();
        holes.push(Hole {
            reference_axis: axis,
            poses,
        });
    }
    let ds = OrientationDataset::new(holes).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((
        ds,
        GroundTruth {
            calibration: cfg.true_calibration,
            pivot_point: cfg.pivot_point,
            outlier_indices: Vec::new(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForceProfile {
    Constant { value: f64 },
    Sine { frequency: f64, amplitude: f64, offset: f64 },
}

impl ForceProfile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            ForceProfile::Constant { value } => value,
            ForceProfile::Sine {
                frequency,
                amplitude,
                offset,
            } => offset + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub lateral_noise_std: f64,
    /// m/s
    pub speed: f64,
    /// Hz
    pub sample_rate: f64,
    pub force: Option<ForceProfile>,
    /// Drawing frame in world coordinates; the trace is emitted in world.
    #[serde(with = "pose_serde")]
    pub frame: Pose,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            lateral_noise_std: 0.0,
            speed: 0.05,
            sample_rate: 100.0,
            force: None,
            frame: Pose::identity(),
            seed: 1,
        }
    }
}

/// Constant-speed traversal of the path with Gaussian in-plane deviation
/// perpendicular to the current segment.
///
/// Each segment gets a whole number of steps close to `speed / sample_rate`
/// so that every waypoint is a sample; waypoint samples carry no deviation.
pub fn gen_demonstration(path: &IdealPath, cfg: &DemoConfig) -> Result<DemonstrationTrace, SynthError> {
    path.validate().map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    if !(cfg.speed.is_finite() && cfg.speed > 0.0 && cfg.sample_rate.is_finite() && cfg.sample_rate > 0.0) {
        return Err(SynthError::InvalidConfig("speed and sample_rate must be positive".into()));
    }
    if !(cfg.lateral_noise_std.is_finite() && cfg.lateral_noise_std >= 0.0) {
        return Err(SynthError::InvalidConfig("lateral_noise_std must be non-negative".into()));
    }
    let step = cfg.speed / cfg.sample_rate;
    let normal = (cfg.lateral_noise_std > 0.0).then(|| Normal::new(0.0, cfg.lateral_noise_std).expect("finite std"));
    let mut rng = stream(cfg.seed, STREAM_LATERAL);

    let mut local: Vec<Vec2> = vec![path.segment(0).0];
    for k in 0..path.segment_count() {
        let (a, b) = path.segment(k);
        let d = b - a;
        let left = Vec2::new(-d.y, d.x) / d.norm();
        let steps = ((d.norm() / step).round() as usize).max(1);
        for i in 1..=steps {
            let mut p = a + d * (i as f64 / steps as f64);
            if i < steps {
                if let Some(n) = &normal {
                    p += left * n.sample(&mut rng);
                }
            }
            local.push(p);
        }
    }
    let points: Vec<TipPoseRecord> = local
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let t = i as f64 / cfg.sample_rate;
            let pose = cfg.frame.compose(&Pose::from_translation(Vec3::new(p.x, p.y, 0.0)));
            TipPoseRecord::new(t, &pose)
        })
        .collect();
    let forces = cfg.force.map(|f| points.iter().map(|p| f.at(p.t)).collect());
    Ok(DemonstrationTrace {
        points,
        forces,
        source: TraceSource::Stylus,
        clamped_force: Vec::new(),
    })
}
