//! Calibration file: a fixed-order JSON object with 17 significant digits.
//!
//! ```json
//! {
//!   "translation": [x, y, z],
//!   "rotation_quat": [qx, qy, qz, qw],
//!   "position_residual_rms": r1,
//!   "orientation_residual_rms": r2,
//!   "filtered_outliers": k
//! }
//! ```

use serde::Deserialize;

use super::{CalibError, TipCalibration};
use crate::geometry::{quat_from_xyzw, Pose, Vec3};

/// `d.dddddddddddddddde±x`: 17 significant digits, exact on re-parse.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| fmt17(v)).collect();
    format!("[{}]", parts.join(", "))
}

pub fn write_calibration(calib: &TipCalibration) -> Result<String, CalibError> {
    let t = calib.transform.translation_array();
    let q = calib.transform.quat_xyzw();
    let scalars = [calib.position_residual_rms, calib.orientation_residual_rms];
    if t.iter().chain(&q).chain(&scalars).any(|v| !v.is_finite()) {
        return Err(CalibError::Format("non-finite value in calibration".into()));
    }
    Ok(format!(
        "{{\n  \"translation\": {},\n  \"rotation_quat\": {},\n  \"position_residual_rms\": {},\n  \"orientation_residual_rms\": {},\n  \"filtered_outliers\": {}\n}}\n",
        fmt_array(&t),
        fmt_array(&q),
        fmt17(calib.position_residual_rms),
        fmt17(calib.orientation_residual_rms),
        calib.filtered_outliers,
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    translation: [f64; 3],
    rotation_quat: [f64; 4],
    position_residual_rms: f64,
    orientation_residual_rms: f64,
    filtered_outliers: usize,
}

pub fn read_calibration(text: &str) -> Result<TipCalibration, CalibError> {
    let raw: CalibrationFile =
        serde_json::from_str(text).map_err(|e| CalibError::Format(e.to_string()))?;
    if raw.position_residual_rms < 0.0 || raw.orientation_residual_rms < 0.0 {
        return Err(CalibError::Format("negative residual".into()));
    }
    let rotation = quat_from_xyzw(raw.rotation_quat).map_err(|e| CalibError::Format(e.to_string()))?;
    Ok(TipCalibration {
        transform: Pose::new(rotation, Vec3::from(raw.translation)),
        position_residual_rms: raw.position_residual_rms,
        orientation_residual_rms: raw.orientation_residual_rms,
        filtered_outliers: raw.filtered_outliers,
    })
}
