//! The six amplitude feature series of a segment.
//!
//! `original` and `smoothed` are per-sample; `envelope`, `variance`,
//! `maximum` and `minimum` are computed over non-overlapping blocks (50
//! samples by default) with any trailing partial block dropped.

use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::Observation;
use crate::error::{invalid, Error, Result};
use crate::scalar::{mean, population_variance, Real};
use crate::segmenter::{centered_moving_average, Segment};

pub const DEFAULT_BLOCK: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet<T> {
    pub original: Vec<T>,
    pub smoothed: Vec<T>,
    pub envelope: Vec<T>,
    pub variance: Vec<T>,
    pub maximum: Vec<T>,
    pub minimum: Vec<T>,
}

/// Names in the fixed layout order.
pub const FEATURE_NAMES: [&str; 6] = ["original", "smoothed", "envelope", "variance", "maximum", "minimum"];

impl<T: Real> FeatureSet<T> {
    /// Series in [`FEATURE_NAMES`] order.
    pub fn series(&self) -> [&[T]; 6] {
        [
            &self.original,
            &self.smoothed,
            &self.envelope,
            &self.variance,
            &self.maximum,
            &self.minimum,
        ]
    }

    pub fn block_count(&self) -> usize {
        self.envelope.len()
    }

    /// Feature table with blockwise columns padded by `NaN`.
    pub fn write_csv<W: Write>(&self, writer: &mut W) -> Result<()> {
        writeln!(writer, "{}", FEATURE_NAMES.join(","))?;
        let series = self.series();
        let rows = series.iter().map(|s| s.len()).max().unwrap_or(0);
        for i in 0..rows {
            let cells: Vec<String> = series
                .iter()
                .map(|s| s.get(i).map_or(f64::NAN, |v| v.as_f64()).to_string())
                .collect();
            writeln!(writer, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub block: usize,
    pub smoothing_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            block: DEFAULT_BLOCK,
            smoothing_window: 50,
        }
    }
}

/// Features of `trace[segment.start..segment.end]`.
pub fn extract_features<T: Real>(
    obs: Observation<'_, T>,
    segment: Segment,
    config: &FeatureConfig,
) -> Result<FeatureSet<T>> {
    if segment.start >= segment.end || segment.end > obs.samples.len() {
        return Err(Error::CrossedBounds(format!(
            "segment [{}, {}) in trace of {}",
            segment.start,
            segment.end,
            obs.samples.len()
        )));
    }
    features_from_samples(&obs.samples[segment.start..segment.end], config)
}

/// Features of a contiguous run of samples.
pub fn features_from_samples<T: Real>(samples: &[Complex<T>], config: &FeatureConfig) -> Result<FeatureSet<T>> {
    if config.block == 0 || config.smoothing_window == 0 {
        return Err(invalid("block and smoothing window must be positive"));
    }
    if samples.len() < config.block {
        return Err(Error::SeriesTooShort {
            len: samples.len(),
            required: config.block,
        });
    }
    let original: Vec<T> = samples.iter().map(|s| s.norm()).collect();
    let smoothed = centered_moving_average(&original, config.smoothing_window);
    let blocks = original.len() / config.block;
    let mut envelope = Vec::with_capacity(blocks);
    let mut variance = Vec::with_capacity(blocks);
    let mut maximum = Vec::with_capacity(blocks);
    let mut minimum = Vec::with_capacity(blocks);
    for block in original.chunks_exact(config.block) {
        let energy: Vec<T> = block.iter().map(|&a| a * a).collect();
        envelope.push(mean(&energy));
        variance.push(population_variance(block));
        maximum.push(block.iter().copied().fold(T::neg_infinity(), T::max));
        minimum.push(block.iter().copied().fold(T::infinity(), T::min));
    }
    Ok(FeatureSet {
        original,
        smoothed,
        envelope,
        variance,
        maximum,
        minimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        apply_backscatter_channel, synthesize_source, ChannelSpec, Modulation, Path, SignalTrace, TagConfig,
        TagSchedule,
    };
    use proptest::prelude::*;

    fn constant(n: usize, a: f64) -> Vec<Complex<f64>> {
        vec![Complex::new(0.0, a); n]
    }

    #[test]
    fn constant_segment() {
        let f = features_from_samples(&constant(200, 0.8), &FeatureConfig::default()).unwrap();
        assert!(f.original.iter().all(|&v| (v - 0.8).abs() < 1e-15));
        assert!(f.smoothed.iter().all(|&v| (v - 0.8).abs() < 1e-12));
        assert!(f.envelope.iter().all(|&v| (v - 0.64).abs() < 1e-12));
        assert!(f.variance.iter().all(|&v| v.abs() < 1e-15));
        assert!(f.maximum.iter().all(|&v| (v - 0.8).abs() < 1e-15));
        assert!(f.minimum.iter().all(|&v| (v - 0.8).abs() < 1e-15));
    }

    #[test]
    fn block_counts_floor() {
        let f = features_from_samples(&constant(520, 1.0), &FeatureConfig::default()).unwrap();
        assert_eq!(f.original.len(), 520);
        assert_eq!(f.smoothed.len(), 520);
        for s in [&f.envelope, &f.variance, &f.maximum, &f.minimum] {
            assert_eq!(s.len(), 10);
        }
        assert!(matches!(
            features_from_samples(&constant(49, 1.0), &FeatureConfig::default()),
            Err(Error::SeriesTooShort { len: 49, required: 50 })
        ));
    }

    #[test]
    fn segment_bounds_checked() {
        let t = SignalTrace::new(constant(100, 1.0), 1e6, crate::channel::OriginLabel::Unknown).unwrap();
        let cfg = FeatureConfig::default();
        assert!(extract_features(t.observe(), Segment { start: 60, end: 120 }, &cfg).is_err());
        assert!(extract_features(t.observe(), Segment { start: 10, end: 40 }, &cfg).is_err());
        assert_eq!(
            extract_features(t.observe(), Segment { start: 10, end: 60 }, &cfg)
                .unwrap()
                .block_count(),
            1
        );
    }

    #[test]
    fn frozen_channel_messages_share_features() {
        // two different QPSK messages through the same noise-free channel:
        // with a single path the amplitude depends only on the tags
        let tags = TagConfig::new(vec![Complex::new(0.3, 0.1), Complex::new(-0.2, 0.0)], 1e4).unwrap();
        let sched = TagSchedule::identity(2, 900, 100, 200);
        let mut ch = ChannelSpec::direct(0.0, 0);
        ch.paths[0] = Path {
            gain: Complex::new(0.8, 0.3),
            delay: 0,
        };
        let m = Modulation::RandomQpsk { samples_per_symbol: 10 };
        let a = apply_backscatter_channel(&synthesize_source(2300, m, 1e6, 1).unwrap(), &tags, &sched, &ch).unwrap();
        let b = apply_backscatter_channel(&synthesize_source(2300, m, 1e6, 2).unwrap(), &tags, &sched, &ch).unwrap();
        let seg = Segment { start: 200, end: 2100 };
        let cfg = FeatureConfig::default();
        let fa: FeatureSet<f64> = extract_features(a.observe(), seg, &cfg).unwrap();
        let fb = extract_features(b.observe(), seg, &cfg).unwrap();
        for (sa, sb) in fa.series().iter().zip(fb.series()) {
            for (x, y) in sa.iter().zip(sb.iter()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_pads_block_columns() {
        let f = features_from_samples(&constant(100, 1.0), &FeatureConfig::default()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "original,smoothed,envelope,variance,maximum,minimum");
        assert_eq!(lines.len(), 101);
        assert_eq!(lines[3], "1,1,NaN,NaN,NaN,NaN");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn blockwise_invariants_and_scaling(
            samples in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 50..400),
            scale in 0.1f64..5.0,
        ) {
            let x: Vec<Complex<f64>> = samples.iter().map(|&(i, q)| Complex::new(i, q)).collect();
            let cfg = FeatureConfig::default();
            let f = features_from_samples(&x, &cfg).unwrap();
            prop_assert_eq!(f.envelope.len(), x.len() / 50);
            for (k, block) in f.original.chunks_exact(50).enumerate() {
                let m = block.iter().sum::<f64>() / 50.0;
                prop_assert!(f.minimum[k] <= m + 1e-12 && m <= f.maximum[k] + 1e-12);
                prop_assert!(f.variance[k] >= 0.0 && f.envelope[k] >= 0.0);
            }
            let y: Vec<Complex<f64>> = x.iter().map(|s| s * scale).collect();
            let g = features_from_samples(&y, &cfg).unwrap();
            let close = |a: &[f64], b: &[f64], p: i32| {
                a.iter().zip(b).all(|(u, v)| (u * scale.powi(p) - v).abs() <= 1e-9 * v.abs().max(1.0))
            };
            prop_assert!(close(&f.original, &g.original, 1));
            prop_assert!(close(&f.smoothed, &g.smoothed, 1));
            prop_assert!(close(&f.maximum, &g.maximum, 1));
            prop_assert!(close(&f.minimum, &g.minimum, 1));
            prop_assert!(close(&f.envelope, &g.envelope, 2));
            prop_assert!(close(&f.variance, &g.variance, 2));
        }
    }
}
