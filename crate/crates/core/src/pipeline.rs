//! Received message pair to verdict: segment, cut the per-tag slots,
//! restore the reference tag order, extract features, build the profile and
//! classify it.
//!
//! Detection only ever sees [`Observation`]s, never origin labels.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::{Observation, TagSchedule};
use crate::defense::rearrange_by_schedule;
use crate::dtw::{build_profile, ProfileVector};
use crate::error::{Error, Result};
use crate::features::{features_from_samples, FeatureConfig, FeatureSet};
use crate::ocsvm::{Label, OcSvmModel};
use crate::scalar::Real;
use crate::segmenter::{segment, Decoded, Segment, SegmentReport, SegmenterConfig};

/// Pearson threshold of the correlation baseline.
pub const DEFAULT_CORRELATION_THRESHOLD: f64 = 0.6789;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub segmenter: SegmenterConfig,
    pub features: FeatureConfig,
}

/// Backscatter portion of one message, with tags in reference order.
#[derive(Debug, Clone)]
pub struct Extraction<T> {
    pub report: SegmentReport,
    /// Per-tag slots in reference order.
    pub slots: Vec<Segment>,
    pub features: FeatureSet<T>,
}

/// Slot bounds in `schedule` position order, anchored at the detected start.
pub fn cut_slots(start: usize, schedule: &TagSchedule, trace_len: usize) -> Result<Vec<Segment>> {
    let (first, _) = schedule.active_span();
    schedule
        .slots()
        .iter()
        .map(|s| Segment::new(start + s.start - first, start + s.end - first, trace_len))
        .collect()
}

/// First on-edge of the decoded bit train, refined by the mean offset of the
/// decoded run edges from the bit grid through `detect_start`. Edges more
/// than two samples from the median offset are ignored.
pub fn bit_aligned_start(decoded: &Decoded, bit_period: usize) -> usize {
    let p = bit_period as i64;
    if p == 0 {
        return decoded.detect_start;
    }
    let anchor = decoded.detect_start as i64;
    let mut residuals: Vec<i64> = decoded
        .on_runs
        .iter()
        .flat_map(|r| [r.start as i64, r.end as i64])
        .map(|edge| {
            let off = edge - anchor;
            off - p * ((off as f64 / p as f64).round() as i64)
        })
        .collect();
    if residuals.is_empty() {
        return decoded.detect_start;
    }
    residuals.sort_unstable();
    let median = residuals[(residuals.len() - 1) / 2];
    let near: Vec<f64> = residuals
        .iter()
        .filter(|&&r| (r - median).abs() <= 2)
        .map(|&r| r as f64)
        .collect();
    // the even-length smoothing window reports edges half a sample late
    let mean = near.iter().sum::<f64>() / near.len() as f64 - 0.5;
    (anchor + mean.round() as i64).max(0) as usize
}

/// Segments `obs`, cuts the slots of `recorded` and reorders them into
/// `reference` order before computing features.
///
/// Slots are anchored on the decoded bit grid rather than at the fused
/// segment start: the envelope half of the fusion is only accurate to a
/// fraction of its window, and the blockwise features need cuts aligned with
/// the tag bits to the sample.
pub fn extract<T: Real>(
    obs: Observation<'_, T>,
    recorded: &TagSchedule,
    reference: &TagSchedule,
    config: &PipelineConfig,
) -> Result<Extraction<T>> {
    let report = segment(obs, &config.segmenter)?;
    let anchor = bit_aligned_start(&report.decoded, config.segmenter.decoder.bit_period_samples);
    // a schedule that runs past the trace means the decoder latched onto
    // something other than the tag train
    let cut = cut_slots(anchor, recorded, obs.samples.len()).map_err(|e| match e {
        Error::CrossedBounds(_) => Error::NoBackscatter,
        e => e,
    })?;
    let slots = rearrange_by_schedule(&cut, recorded, reference)?;
    let samples: Vec<Complex<T>> = slots
        .iter()
        .flat_map(|s| obs.samples[s.start..s.end].iter().copied())
        .collect();
    let features = features_from_samples(&samples, &config.features)?;
    Ok(Extraction {
        report,
        slots,
        features,
    })
}

/// Profile of message 3 against message 1; message 1's schedule is the
/// reference order.
pub fn session_profile<T: Real>(
    message1: Observation<'_, T>,
    schedule1: &TagSchedule,
    message3: Observation<'_, T>,
    schedule3: &TagSchedule,
    config: &PipelineConfig,
) -> Result<(ProfileVector<T>, Extraction<T>, Extraction<T>)> {
    let a = extract(message1, schedule1, schedule1, config)?;
    let b = extract(message3, schedule3, schedule1, config)?;
    let profile = build_profile(&a.features, &b.features)?;
    Ok((profile, a, b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Legitimate,
    Attacker,
    /// No tag reflections found; never treated as acceptance.
    NoBackscatter,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        self == Verdict::Legitimate
    }

    pub fn label(self) -> Label {
        if self.accepted() {
            Label::Legitimate
        } else {
            Label::Attacker
        }
    }
}

impl From<Label> for Verdict {
    fn from(label: Label) -> Self {
        match label {
            Label::Legitimate => Verdict::Legitimate,
            Label::Attacker => Verdict::Attacker,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub verdict: Verdict,
    /// Decision score; `None` when no profile could be built.
    pub score: Option<f64>,
}

/// Full pipeline; a missing backscatter signal in either message becomes an
/// explicit [`Verdict::NoBackscatter`].
pub fn detect<T: Real>(
    model: &OcSvmModel<T>,
    message1: Observation<'_, T>,
    schedule1: &TagSchedule,
    message3: Observation<'_, T>,
    schedule3: &TagSchedule,
    config: &PipelineConfig,
) -> Result<Detection> {
    match session_profile(message1, schedule1, message3, schedule3, config) {
        Ok((profile, _, _)) => {
            let d = model.decide(profile.as_slice())?;
            Ok(Detection {
                verdict: d.label.into(),
                score: Some(d.score.as_f64()),
            })
        }
        Err(Error::NoBackscatter) => Ok(Detection {
            verdict: Verdict::NoBackscatter,
            score: None,
        }),
        Err(e) => Err(e),
    }
}

/// Pearson correlation over the common prefix of `a` and `b`.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Result<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return Err(Error::UndefinedCorrelation);
    }
    let (a, b) = (&a[..n], &b[..n]);
    let mean = |v: &[T]| v.iter().map(|x| x.as_f64()).sum::<f64>() / n as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDecision {
    pub correlation: f64,
    pub label: Label,
}

/// Legitimate iff the smoothed, rearranged backscatter series correlate at
/// or above `threshold`.
pub fn correlation_decision<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>, threshold: f64) -> Result<CorrelationDecision> {
    let correlation = pearson(&a.smoothed, &b.smoothed)?;
    let label = if correlation >= threshold {
        Label::Legitimate
    } else {
        Label::Attacker
    };
    Ok(CorrelationDecision { correlation, label })
}

/// Correlation baseline on a message pair; no-backscatter as in [`detect`].
pub fn correlation_baseline<T: Real>(
    message1: Observation<'_, T>,
    schedule1: &TagSchedule,
    message3: Observation<'_, T>,
    schedule3: &TagSchedule,
    threshold: f64,
    config: &PipelineConfig,
) -> Result<(Verdict, Option<f64>)> {
    let pair = extract(message1, schedule1, schedule1, config)
        .and_then(|a| extract(message3, schedule3, schedule1, config).map(|b| (a, b)));
    match pair {
        Ok((a, b)) => {
            let d = correlation_decision(&a.features, &b.features, threshold)?;
            Ok((d.label.into(), Some(d.correlation)))
        }
        Err(Error::NoBackscatter) => Ok((Verdict::NoBackscatter, None)),
        Err(e) => Err(e),
    }
}
