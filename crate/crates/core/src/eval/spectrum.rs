use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use super::EvalError;
use crate::ingest::ForceRecording;

const MIN_SAMPLES: usize = 8;

/// Amplitudes at or below this fraction of the largest |x − mean| are treated as zero.
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", content = "value", rename_all = "lowercase")]
pub enum SpectrumThreshold {
    /// Fraction of the largest non-DC amplitude.
    Relative(f64),
    /// Fixed amplitude in newtons.
    Absolute(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSummary {
    pub sample_rate: f64,
    pub bin_width: f64,
    pub n_samples: usize,
    /// Single-sided amplitude per bin, DC first.
    pub amplitudes: Vec<f64>,
    pub threshold: f64,
    pub count_above: usize,
}

impl SpectrumSummary {
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.amplitudes.len()).map(|k| k as f64 * self.bin_width).collect()
    }

    /// Sum of squared samples implied by the amplitudes.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.n_samples;
        let sum: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
                if edge { a * a } else { 0.5 * a * a }
            })
            .sum();
        n as f64 * sum
    }
}

/// Resamples onto a uniform grid at the median sampling interval.
///
/// Returns the sampling interval and the linearly interpolated values.
pub fn resample_uniform(rec: &ForceRecording) -> Result<(f64, Vec<f64>), EvalError> {
    let s = &rec.samples;
    if s.len() < MIN_SAMPLES {
        return Err(EvalError::TooShort(s.len()));
    }
    let mut dts: Vec<f64> = s.windows(2).map(|w| w[1].t - w[0].t).collect();
    if dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(EvalError::InvalidInput("force timestamps must be strictly increasing".into()));
    }
    dts.sort_by(f64::total_cmp);
    let m = dts.len();
    let dt = if m % 2 == 1 { dts[m / 2] } else { 0.5 * (dts[m / 2 - 1] + dts[m / 2]) };
    let t0 = s[0].t;
    let span = s[s.len() - 1].t - t0;
    let count = (span / dt + 1e-6).floor() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for i in 0..count {
        let t = t0 + i as f64 * dt;
        while j + 2 < s.len() && s[j + 1].t <= t {
            j += 1;
        }
        let (a, b) = (&s[j], &s[j + 1]);
        let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        out.push(a.fz + (b.fz - a.fz) * f);
    }
    if out.len() < MIN_SAMPLES {
        return Err(EvalError::TooShort(out.len()));
    }
    Ok((dt, out))
}

/// Single-sided magnitude spectrum of the mean-removed, uniformly resampled force.
pub fn force_spectrum(rec: &ForceRecording, threshold: SpectrumThreshold) -> Result<SpectrumSummary, EvalError> {
    match threshold {
        SpectrumThreshold::Relative(r) | SpectrumThreshold::Absolute(r) if !(r.is_finite() && r >= 0.0) => {
            return Err(EvalError::InvalidInput(format!("threshold must be finite and non-negative, got {r}")));
        }
        _ => {}
    }
    let (dt, values) = resample_uniform(rec)?;
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let amplitudes: Vec<f64> = (0..=half)
        .map(|k| {
            let edge = k == 0 || (n % 2 == 0 && k == half);
            let scale = if edge { 1.0 } else { 2.0 };
            scale * buf[k].norm() / n as f64
        })
        .collect();
    let peak = amplitudes[1..].iter().cloned().fold(0.0, f64::max);
    let level = match threshold {
        SpectrumThreshold::Relative(r) => r * peak,
        SpectrumThreshold::Absolute(a) => a,
    };
    let max_abs = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let floor = NOISE_FLOOR * max_abs;
    let count_above = amplitudes[1..].iter().filter(|&&a| a > level && a > floor).count();
    Ok(SpectrumSummary {
        sample_rate: 1.0 / dt,
        bin_width: 1.0 / (n as f64 * dt),
        n_samples: n,
        amplitudes,
        threshold: level,
        count_above,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ForceSample;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn recording(rate: f64, seconds: f64, f: impl Fn(f64) -> f64) -> ForceRecording {
        let n = (rate * seconds).round() as usize;
        ForceRecording {
            samples: (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    ForceSample { t, fz: f(t) }
                })
                .collect(),
        }
    }

    fn naive_magnitudes(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, v) in values.iter().enumerate() {
                    let phi = -2.0 * PI * (k * j) as f64 / n as f64;
                    re += v * phi.cos();
                    im += v * phi.sin();
                }
                re.hypot(im)
            })
            .collect()
    }

    #[test]
    fn constant_has_no_peaks() {
        let s = force_spectrum(&recording(100.0, 2.0, |_| 4.2), SpectrumThreshold::Relative(0.05)).unwrap();
        assert_eq!(s.count_above, 0);
    }

    #[test]
    fn single_sine() {
        let rec = recording(100.0, 10.0, |t| 3.0 + 1.5 * (2.0 * PI * 5.0 * t).sin());
        let s = force_spectrum(&rec, SpectrumThreshold::Relative(0.05)).unwrap();
        assert_eq!(s.n_samples, 1000);
        assert!((s.sample_rate - 100.0).abs() < 1e-9);
        assert!((s.bin_width - 0.1).abs() < 1e-12);
        assert_eq!(s.count_above, 1);
        let peak = (1..s.amplitudes.len()).max_by(|&a, &b| s.amplitudes[a].total_cmp(&s.amplitudes[b])).unwrap();
        assert!((s.frequencies()[peak] - 5.0).abs() < 1e-9);
        assert!((s.amplitudes[peak] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn two_sines() {
        let rec = recording(100.0, 10.0, |t| (2.0 * PI * 3.0 * t).sin() + (2.0 * PI * 7.0 * t).sin());
        let s = force_spectrum(&rec, SpectrumThreshold::Relative(0.05)).unwrap();
        assert_eq!(s.count_above, 2);
    }

    #[test]
    fn absolute_threshold() {
        let rec = recording(100.0, 10.0, |t| 2.0 * (2.0 * PI * 3.0 * t).sin() + 0.5 * (2.0 * PI * 7.0 * t).sin());
        assert_eq!(force_spectrum(&rec, SpectrumThreshold::Absolute(1.0)).unwrap().count_above, 1);
        assert_eq!(force_spectrum(&rec, SpectrumThreshold::Absolute(0.1)).unwrap().count_above, 2);
        assert!(force_spectrum(&rec, SpectrumThreshold::Absolute(-1.0)).is_err());
    }

    #[test]
    fn too_short() {
        let rec = recording(100.0, 0.07, |t| t);
        assert_eq!(force_spectrum(&rec, SpectrumThreshold::Relative(0.05)), Err(EvalError::TooShort(7)));
    }

    #[test]
    fn irregular_sampling_is_resampled() {
        let mut rec = recording(100.0, 1.0, |t| t);
        rec.samples.remove(50);
        let (dt, values) = resample_uniform(&rec).unwrap();
        assert!((dt - 0.01).abs() < 1e-12);
        assert_eq!(values.len(), 100);
        assert!((values[50] - 0.5).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn parseval(values in prop::collection::vec(-10.0f64..10.0, 8..80)) {
            let rec = ForceRecording {
                samples: values.iter().enumerate().map(|(i, &fz)| ForceSample { t: i as f64 * 0.01, fz }).collect(),
            };
            let s = force_spectrum(&rec, SpectrumThreshold::Relative(0.05)).unwrap();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
            let time_energy: f64 = centered.iter().map(|v| v * v).sum();
            prop_assume!(time_energy > 1e-9);
            prop_assert!((s.spectral_energy() - time_energy).abs() <= 1e-6 * time_energy);
            let n = values.len();
            let full: f64 = naive_magnitudes(&centered).iter().map(|m| m * m).sum::<f64>() / n as f64;
            prop_assert!((full - time_energy).abs() <= 1e-6 * time_energy);
            for (k, m) in naive_magnitudes(&centered).iter().take(n / 2 + 1).enumerate() {
                let edge = k == 0 || (n % 2 == 0 && k == n / 2);
                let expected = if edge { *m } else { 2.0 * m } / n as f64;
                prop_assert!((s.amplitudes[k] - expected).abs() < 1e-9);
            }
        }
    }
}
