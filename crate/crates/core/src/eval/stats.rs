use serde::Serialize;

use super::{EvalError, SampledSegment};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentAggregate {
    pub label: String,
    /// `None` at indices where every trace is missing.
    pub stats: Vec<Option<IndexStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub segments: Vec<SegmentAggregate>,
}

fn index_stats(values: &[f64]) -> Option<IndexStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(IndexStats {
        count: values.len(),
        mean: mean.clamp(min, max),
        std: var.sqrt(),
        min,
        max,
    })
}

/// Per-index signed-error statistics across traces, in trace order.
pub fn aggregate(traces: &[Vec<SampledSegment>]) -> Result<Aggregate, EvalError> {
    let first = traces.first().ok_or(EvalError::EmptyInput)?;
    for (i, t) in traces.iter().enumerate().skip(1) {
        if t.len() != first.len() {
            return Err(EvalError::ShapeMismatch(format!(
                "trace {i} has {} segments, trace 0 has {}",
                t.len(),
                first.len()
            )));
        }
        for (s, s0) in t.iter().zip(first) {
            if s.pairs.len() != s0.pairs.len() || s.label != s0.label {
                return Err(EvalError::ShapeMismatch(format!(
                    "trace {i} segment {} has {} points, trace 0 segment {} has {}",
                    s.label,
                    s.pairs.len(),
                    s0.label,
                    s0.pairs.len()
                )));
            }
        }
    }
    let segments = first
        .iter()
        .enumerate()
        .map(|(k, seg)| SegmentAggregate {
            label: seg.label.clone(),
            stats: (0..seg.pairs.len())
                .map(|i| {
                    let values: Vec<f64> = traces
                        .iter()
                        .filter_map(|t| t[k].pairs[i].map(|p| p.signed_error))
                        .collect();
                    index_stats(&values)
                })
                .collect(),
        })
        .collect();
    Ok(Aggregate { segments })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonHistogram {
    pub epsilon: f64,
    pub bin_width: f64,
    /// Bin `k` covers `[k w, (k + 1) w)`.
    pub counts: Vec<usize>,
    pub total: usize,
    /// Fraction of errors with `|e| <= epsilon`.
    pub epsilon_fraction: f64,
}

impl EpsilonHistogram {
    pub fn bin_edges(&self) -> Vec<(f64, f64)> {
        (0..self.counts.len())
            .map(|k| (k as f64 * self.bin_width, (k + 1) as f64 * self.bin_width))
            .collect()
    }
}

/// Histogram of unsigned errors and the fraction inside the ε zone.
pub fn epsilon_histogram(errors: &[f64], epsilon: f64, bin_width: f64) -> Result<EpsilonHistogram, EvalError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(EvalError::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(EvalError::InvalidInput(format!("bin width must be positive, got {bin_width}")));
    }
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(EvalError::InvalidInput("non-finite error value".into()));
    }
    let max = errors.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let bins = (max / bin_width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for e in errors {
        let k = ((e.abs() / bin_width).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let inside = errors.iter().filter(|e| e.abs() <= epsilon).count();
    Ok(EpsilonHistogram {
        epsilon,
        bin_width,
        counts,
        total: errors.len(),
        epsilon_fraction: inside as f64 / errors.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::SampledPair;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn segment(label: &str, errors: &[Option<f64>]) -> SampledSegment {
        SampledSegment {
            label: label.into(),
            pairs: errors
                .iter()
                .map(|e| {
                    e.map(|e| SampledPair {
                        ideal_point: [0.0, 0.0],
                        demo_point: [0.0, e],
                        signed_error: e,
                        z_offset: 0.0,
                        force: None,
                    })
                })
                .collect(),
        }
    }

    #[test]
    fn single_trace() {
        let agg = aggregate(&[vec![segment("A", &[Some(0.001), Some(-0.002)])]]).unwrap();
        let s = agg.segments[0].stats[1].unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (-0.002, 0.0, -0.002, -0.002));
    }

    #[test]
    fn symmetric_pair() {
        let d = 0.0015;
        let agg = aggregate(&[
            vec![segment("A", &[Some(d); 5])],
            vec![segment("A", &[Some(-d); 5])],
        ])
        .unwrap();
        for s in agg.segments[0].stats.iter().flatten() {
            assert_eq!(s.mean, 0.0);
            assert!((s.std - d).abs() < 1e-18);
            assert_eq!((s.min, s.max), (-d, d));
        }
    }

    #[test]
    fn missing_pairs_are_skipped() {
        let agg = aggregate(&[
            vec![segment("A", &[Some(1.0), None])],
            vec![segment("A", &[Some(3.0), None])],
        ])
        .unwrap();
        assert_eq!(agg.segments[0].stats[0].unwrap().mean, 2.0);
        assert_eq!(agg.segments[0].stats[1], None);
    }

    #[test]
    fn shape_mismatch() {
        let a = vec![segment("A", &[Some(0.0); 3])];
        let b = vec![segment("A", &[Some(0.0); 4])];
        assert!(matches!(aggregate(&[a.clone(), b]), Err(EvalError::ShapeMismatch(_))));
        let c = vec![segment("A", &[Some(0.0); 3]), segment("B", &[Some(0.0); 3])];
        assert!(matches!(aggregate(&[a, c]), Err(EvalError::ShapeMismatch(_))));
        assert_eq!(aggregate(&[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn gaussian_cohort_std() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = Normal::new(0.0, 0.001).unwrap();
        let traces: Vec<Vec<SampledSegment>> = (0..24)
            .map(|_| {
                let errs: Vec<Option<f64>> = (0..100).map(|_| Some(normal.sample(&mut rng))).collect();
                vec![segment("A", &errs)]
            })
            .collect();
        let agg = aggregate(&traces).unwrap();
        let stds: Vec<f64> = agg.segments[0].stats.iter().flatten().map(|s| s.std).collect();
        let mean_std = stds.iter().sum::<f64>() / stds.len() as f64;
        assert!((mean_std - 0.001).abs() < 0.25 * 0.001, "{mean_std}");
    }

    #[test]
    fn all_zero_errors() {
        let h = epsilon_histogram(&[0.0; 10], 0.003, 0.0005).unwrap();
        assert_eq!(h.epsilon_fraction, 1.0);
        assert_eq!(h.counts, vec![10]);
    }

    #[test]
    fn uniform_errors_half_inside() {
        let errors: Vec<f64> = (0..6000).map(|i| (i as f64 + 0.5) * 1e-6).collect();
        let h = epsilon_histogram(&errors, 0.003, 0.0005).unwrap();
        assert!((h.epsilon_fraction - 0.5).abs() < 1e-3);
        assert_eq!(h.counts.len(), 12);
        assert!(h.counts.iter().all(|&c| c == 500));
        assert_eq!(h.bin_edges()[11], (0.0055, 0.006));
    }

    #[test]
    fn histogram_errors() {
        assert_eq!(epsilon_histogram(&[], 0.003, 0.0005), Err(EvalError::EmptyInput));
        assert!(epsilon_histogram(&[0.0], 0.0, 0.0005).is_err());
        assert!(epsilon_histogram(&[0.0], 0.003, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn fraction_monotone_in_epsilon(
            errors in prop::collection::vec(-0.01f64..0.01, 1..200),
            e1 in 1e-5f64..0.01,
            e2 in 1e-5f64..0.01,
        ) {
            let (lo, hi) = (e1.min(e2), e1.max(e2));
            let a = epsilon_histogram(&errors, lo, 0.0005).unwrap();
            let b = epsilon_histogram(&errors, hi, 0.0005).unwrap();
            prop_assert!(a.epsilon_fraction <= b.epsilon_fraction);
            prop_assert!((0.0..=1.0).contains(&b.epsilon_fraction));
            prop_assert_eq!(a.counts.iter().sum::<usize>(), errors.len());
        }

        #[test]
        fn envelope_brackets_mean(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..10)) {
            let traces: Vec<Vec<SampledSegment>> = rows
                .iter()
                .map(|r| vec![segment("A", &r.iter().map(|&e| Some(e)).collect::<Vec<_>>())])
                .collect();
            let agg = aggregate(&traces).unwrap();
            for (i, s) in agg.segments[0].stats.iter().enumerate() {
                let s = s.unwrap();
                prop_assert!(s.min <= s.mean && s.mean <= s.max);
                prop_assert!(rows.iter().any(|r| r[i] == s.min));
                prop_assert!(rows.iter().any(|r| r[i] == s.max));
            }
        }
    }
}
