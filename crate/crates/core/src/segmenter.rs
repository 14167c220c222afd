//! Locating the backscatter-bearing region of a received trace.
//!
//! Two independent estimates are fused:
//!
//! * [`decode_backscatter`] slices the smoothed amplitude into tag bits and
//!   reports the bounds `(eta1, eta2)` of the longest continuously decodable
//!   run, plus the weakest tag energy it saw.
//! * [`energy_envelope`] and [`envelope_variance`] measure how much the
//!   sliding-window energy fluctuates; [`variance_thresholds`] finds the first
//!   and last threshold crossings `(eta3, eta4)`.
//!
//! [`fuse_segment`] averages the two. [`segment`] runs the whole chain.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::Observation;
use crate::error::{invalid, Error, Result};
use crate::scalar::{median, Real};

/// Half-open sample range `[start, end)` holding the backscatter signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(start: usize, end: usize, trace_len: usize) -> Result<Self> {
        if start >= end || end > trace_len {
            return Err(Error::CrossedBounds(format!(
                "[{start}, {end}) in trace of {trace_len}"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Number of samples shared with `[start, end)`.
    pub fn overlap(&self, start: usize, end: usize) -> usize {
        let lo = self.start.max(start);
        let hi = self.end.min(end);
        hi.saturating_sub(lo)
    }
}

/// Sliding-window mean energy `E(i) = (1/N) sum_{k=i}^{i+N-1} |x(k)|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyEnvelope<T> {
    pub values: Vec<T>,
    pub window: usize,
}

pub fn energy_envelope<T: Real>(samples: &[Complex<T>], window: usize) -> Result<EnergyEnvelope<T>> {
    if window == 0 {
        return Err(invalid("window must be positive"));
    }
    if window > samples.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: samples.len(),
        });
    }
    let power: Vec<T> = samples.iter().map(|s| s.norm_sqr()).collect();
    let values = sliding_mean(&power, window)
        .into_iter()
        .map(|v| v.max(T::zero()))
        .collect();
    Ok(EnergyEnvelope { values, window })
}

/// Means of every length-`window` run of `values`. The running sum is
/// recomputed from scratch every `window` steps to bound drift.
fn sliding_mean<T: Real>(values: &[T], window: usize) -> Vec<T> {
    let count = values.len() + 1 - window;
    let inv = T::one() / T::from_usize_lossy(window);
    let mut out = Vec::with_capacity(count);
    let mut sum = T::zero();
    for i in 0..count {
        if i % window == 0 {
            sum = values[i..i + window].iter().copied().sum();
        } else {
            sum += values[i + window - 1] - values[i - 1];
        }
        out.push(sum * inv);
    }
    out
}

/// Population variance of every length-`window` run of the envelope.
pub fn envelope_variance<T: Real>(envelope: &EnergyEnvelope<T>, window: usize) -> Result<Vec<T>> {
    let e = &envelope.values;
    if window == 0 {
        return Err(invalid("window must be positive"));
    }
    if window >= e.len() {
        return Err(Error::WindowTooLarge {
            window,
            len: e.len(),
        });
    }
    // shifting by the global mean keeps the sum-of-squares form well conditioned
    let shift = crate::scalar::mean(e);
    let centered: Vec<T> = e.iter().map(|&v| v - shift).collect();
    let squares: Vec<T> = centered.iter().map(|&v| v * v).collect();
    let m1 = sliding_mean(&centered, window);
    let m2 = sliding_mean(&squares, window);
    Ok(m1
        .iter()
        .zip(&m2)
        .map(|(&a, &b)| (b - a * a).max(T::zero()))
        .collect())
}

/// First and last threshold crossings of the variance sequence.
///
/// `eta3` is the last index before the first `V(j) > T`; `eta4` is the
/// first index after the last `V(j) > T`. Equality counts as below
/// threshold. Returns `Ok(None)` when `V` never exceeds `T`.
pub fn variance_thresholds<T: Real>(variance: &[T], threshold: T) -> Result<Option<(usize, usize)>> {
    if variance.is_empty() {
        return Err(Error::EmptyInput("variance sequence"));
    }
    if !(threshold > T::zero()) {
        return Err(invalid("threshold must be positive"));
    }
    let first = variance.iter().position(|&v| v > threshold);
    let last = variance.iter().rposition(|&v| v > threshold);
    Ok(match (first, last) {
        (Some(f), Some(l)) => Some((f.saturating_sub(1), (l + 1).min(variance.len() - 1))),
        _ => None,
    })
}

/// Midpoints of the decoding and envelope bounds, rounded half up.
pub fn fuse_segment(eta1: usize, eta2: usize, eta3: usize, eta4: usize) -> Result<Segment> {
    if eta1 >= eta2 || eta3 >= eta4 {
        return Err(Error::CrossedBounds(format!(
            "decode [{eta1}, {eta2}) envelope [{eta3}, {eta4})"
        )));
    }
    Ok(Segment {
        start: (eta1 + eta3 + 1) / 2,
        end: (eta2 + eta4 + 1) / 2,
    })
}

/// Tunables for the bit slicer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Moving-average length applied to the amplitude.
    pub smoothing_window: usize,
    /// Tag bit period in samples.
    pub bit_period_samples: usize,
    /// Minimum on/off contrast as a fraction of the baseline amplitude.
    pub min_relative_contrast: f64,
    /// Minimum on/off contrast in units of the smoothed-noise deviation.
    pub noise_factor: f64,
    /// Longest tolerated gap between decoded "on" bits, in bit periods.
    pub max_gap_bits: f64,
    /// Fewest "on" bits that count as a detection.
    pub min_on_bits: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            smoothing_window: 50,
            bit_period_samples: 100,
            min_relative_contrast: 0.02,
            noise_factor: 6.0,
            max_gap_bits: 2.0,
            min_on_bits: 2,
        }
    }
}

/// One decoded "on" run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitRun {
    pub start: usize,
    pub end: usize,
    pub bits: usize,
    /// Smoothed amplitude offset from the baseline, signed.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub bits: Vec<u8>,
    /// `eta1`; zero when nothing was decoded.
    pub detect_start: usize,
    /// `eta2` (exclusive); zero when nothing was decoded.
    pub detect_end: usize,
    pub on_runs: Vec<BitRun>,
    /// Baseline (tag-off) smoothed amplitude.
    pub baseline: f64,
    /// Smallest squared on/off amplitude contrast over the decoded runs.
    pub min_tag_energy: f64,
}

impl Decoded {
    pub fn detected(&self) -> bool {
        !self.bits.is_empty()
    }

    fn none(baseline: f64) -> Self {
        Self {
            bits: Vec::new(),
            detect_start: 0,
            detect_end: 0,
            on_runs: Vec::new(),
            baseline,
            min_tag_energy: 0.0,
        }
    }
}

/// Centered moving average; windows are truncated at the edges.
pub(crate) fn centered_moving_average<T: Real>(values: &[T], window: usize) -> Vec<T> {
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(T::zero());
    let mut acc = T::zero();
    for &v in values {
        acc += v;
        prefix.push(acc);
    }
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (lo + window).min(n);
            (prefix[hi] - prefix[lo]) / T::from_usize_lossy(hi - lo)
        })
        .collect()
}

/// Sliding max and min over `[i - half, i + half]`.
fn local_extrema<T: Real>(values: &[T], half: usize) -> (Vec<T>, Vec<T>) {
    use std::collections::VecDeque;
    let n = values.len();
    let mut hi = vec![T::zero(); n];
    let mut lo = vec![T::zero(); n];
    let mut maxq: VecDeque<usize> = VecDeque::new();
    let mut minq: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..n {
        let right = (i + half).min(n - 1);
        while next <= right {
            while maxq.back().is_some_and(|&b| values[b] <= values[next]) {
                maxq.pop_back();
            }
            maxq.push_back(next);
            while minq.back().is_some_and(|&b| values[b] >= values[next]) {
                minq.pop_back();
            }
            minq.push_back(next);
            next += 1;
        }
        let left = i.saturating_sub(half);
        while maxq.front().is_some_and(|&f| f < left) {
            maxq.pop_front();
        }
        while minq.front().is_some_and(|&f| f < left) {
            minq.pop_front();
        }
        hi[i] = values[maxq[0]];
        lo[i] = values[minq[0]];
    }
    (hi, lo)
}

/// Moving-average bit slicer.
///
/// The amplitude is smoothed, a baseline (tag-off level) is taken as the
/// median, and wherever the local max-min range over one bit period either
/// side clears the contrast floor, samples are sliced at the local midpoint.
/// "On" is whichever side lies farther from the baseline, so tags that
/// interfere destructively decode the same way as constructive ones. Runs
/// shorter than half a bit are treated as glitches, and "on" runs separated
/// by at most `max_gap_bits` periods are grouped; the group with the most
/// runs is the detection.
pub fn decode_backscatter<T: Real>(obs: Observation<'_, T>, config: &DecoderConfig) -> Result<Decoded> {
    let w = config.smoothing_window;
    let p = config.bit_period_samples;
    if w == 0 || p == 0 {
        return Err(invalid("smoothing window and bit period must be positive"));
    }
    let n = obs.samples.len();
    if w >= n {
        return Err(Error::WindowTooLarge { window: w, len: n });
    }
    let amp: Vec<f64> = obs.samples.iter().map(|s| s.norm().as_f64()).collect();
    let smooth = centered_moving_average(&amp, w);
    let baseline = median(&smooth).unwrap_or(0.0);

    let residual: Vec<f64> = amp.iter().zip(&smooth).map(|(a, s)| a - s).collect();
    let r_med = median(&residual).unwrap_or(0.0);
    let abs_dev: Vec<f64> = residual.iter().map(|r| (r - r_med).abs()).collect();
    let sigma_smooth = 1.4826 * median(&abs_dev).unwrap_or(0.0) / (w as f64).sqrt();
    let floor = (config.min_relative_contrast * baseline)
        .max(config.noise_factor * sigma_smooth)
        .max(f64::MIN_POSITIVE);

    let (hi, lo) = local_extrema(&smooth, p);
    let on: Vec<bool> = (0..n)
        .map(|i| {
            if hi[i] - lo[i] < floor {
                return false;
            }
            let mid = 0.5 * (hi[i] + lo[i]);
            if (hi[i] - baseline).abs() >= (lo[i] - baseline).abs() {
                smooth[i] > mid
            } else {
                smooth[i] < mid
            }
        })
        .collect();

    let mut runs = true_runs(&on);
    let min_len = p.div_ceil(2);
    // fill short off-gaps, then drop short on-runs
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs.drain(..) {
        match merged.last_mut() {
            Some(prev) if run.0 - prev.1 < min_len => prev.1 = run.1,
            _ => merged.push(run),
        }
    }
    let kept: Vec<(usize, usize)> = merged.into_iter().filter(|r| r.1 - r.0 >= min_len).collect();
    if kept.is_empty() {
        return Ok(Decoded::none(baseline));
    }

    let max_gap = (config.max_gap_bits * p as f64).round() as usize;
    let mut groups: Vec<Vec<(usize, usize)>> = vec![vec![kept[0]]];
    for &run in &kept[1..] {
        let last = groups.last().and_then(|g| g.last()).copied().expect("non-empty");
        if run.0 - last.1 <= max_gap {
            groups.last_mut().expect("non-empty").push(run);
        } else {
            groups.push(vec![run]);
        }
    }
    // most runs wins; earliest on ties
    let best = groups
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.len().cmp(&b.len()).then(ib.cmp(ia)))
        .map(|(_, g)| g)
        .expect("non-empty");
    if best.len() < config.min_on_bits {
        return Ok(Decoded::none(baseline));
    }

    let bit_count = |len: usize| ((len as f64 / p as f64).round() as usize).max(1);
    let mut bits = Vec::new();
    let mut on_runs = Vec::with_capacity(best.len());
    for (k, &(start, end)) in best.iter().enumerate() {
        if k > 0 {
            let gap = start - best[k - 1].1;
            bits.extend(std::iter::repeat(0u8).take(bit_count(gap)));
        }
        let count = bit_count(end - start);
        bits.extend(std::iter::repeat(1u8).take(count));
        let quarter = (end - start) / 4;
        let core = &smooth[start + quarter..end - quarter];
        let level = core.iter().sum::<f64>() / core.len() as f64;
        on_runs.push(BitRun {
            start,
            end,
            bits: count,
            contrast: level - baseline,
        });
    }
    let min_contrast = on_runs
        .iter()
        .map(|r| r.contrast.abs())
        .fold(f64::INFINITY, f64::min);

    Ok(Decoded {
        bits,
        detect_start: best[0].0,
        detect_end: best[best.len() - 1].1,
        on_runs,
        baseline,
        min_tag_energy: min_contrast * min_contrast,
    })
}

fn true_runs(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len()));
    }
    runs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub decoder: DecoderConfig,
    /// Window `N` of the energy envelope.
    pub envelope_window: usize,
    /// Window of the envelope variance.
    pub variance_window: usize,
    /// Samples searched for envelope crossings beyond the decoded bounds.
    pub search_margin: usize,
    /// Fixed variance threshold; `None` uses the squared weakest tag energy.
    pub threshold: Option<f64>,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            decoder: DecoderConfig::default(),
            envelope_window: 50,
            variance_window: 50,
            search_margin: 300,
            threshold: None,
        }
    }
}

impl SegmenterConfig {
    pub fn with_bit_period(mut self, bit_period_samples: usize) -> Self {
        self.decoder.bit_period_samples = bit_period_samples;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: Segment,
    pub decoded: Decoded,
    /// Envelope start and end converted to sample indices.
    pub envelope_start: usize,
    pub envelope_end: usize,
    pub threshold: f64,
}

/// Decoding, envelope detection and fusion in one call.
///
/// `V(j)` summarizes samples `[j, j + N + M - 1)` for envelope window `N`
/// and variance window `M`. The first crossing fires once roughly a quarter
/// of a window of ramp has entered, so the start is reported at
/// `eta3 + N + M - 1 - N/4` and the end at `eta4 + N/4 - 1`.
pub fn segment<T: Real>(obs: Observation<'_, T>, config: &SegmenterConfig) -> Result<SegmentReport> {
    let decoded = decode_backscatter(obs, &config.decoder)?;
    if !decoded.detected() {
        return Err(Error::NoBackscatter);
    }
    let envelope = energy_envelope(obs.samples, config.envelope_window)?;
    let variance = envelope_variance(&envelope, config.variance_window)?;
    let threshold = config
        .threshold
        .unwrap_or(decoded.min_tag_energy * decoded.min_tag_energy);
    if !(threshold > 0.0) {
        return Err(Error::NoBackscatter);
    }
    let span = config.envelope_window + config.variance_window - 1;
    let lo = decoded
        .detect_start
        .saturating_sub(config.search_margin + span);
    let hi = (decoded.detect_end + config.search_margin).min(variance.len());
    if lo >= hi {
        return Err(Error::NoBackscatter);
    }
    let window = &variance[lo..hi];
    let (eta3, eta4) = variance_thresholds(window, T::lit(threshold))?.ok_or(Error::NoBackscatter)?;
    let ramp = config.envelope_window / 4;
    let envelope_start = (lo + eta3 + span).saturating_sub(ramp);
    let envelope_end = (lo + eta4 + ramp).saturating_sub(1);
    let n = obs.samples.len();
    let fused = fuse_segment(
        decoded.detect_start,
        decoded.detect_end,
        envelope_start.min(n - 1),
        envelope_end.min(n),
    )?;
    let segment = Segment::new(fused.start, fused.end.min(n), n)?;
    Ok(SegmentReport {
        segment,
        decoded,
        envelope_start,
        envelope_end,
        threshold,
    })
}
