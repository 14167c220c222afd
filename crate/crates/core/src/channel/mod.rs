//! Received-signal synthesis under the ambient-backscatter model.
//!
//! A received sample is the sum of the transmitted waveform over every
//! propagation path, the reflection of each active tag, and additive complex
//! Gaussian noise:
//!
//! ```text
//! r(i) = sum_n beta_n * s(i - t_n) + sum_k alpha_k * b_k(i - d_k) * s(i - d_k) + noise(i)
//! ```
//!
//! where `b_k` is tag `k`'s on/off square wave during its slot of the
//! [`TagSchedule`] and zero elsewhere. Everything is a pure function of its
//! inputs and an explicit seed.

mod attack;

pub use attack::{capture, craft_advanced_attack, diverge_channel, Capture};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Ground-truth origin of a trace. Only the metrics scorer may look at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum OriginLabel {
    Legitimate = 0,
    BasicAttacker = 1,
    AdvancedAttacker = 2,
    Unknown = 3,
}

impl OriginLabel {
    pub fn from_u8(value: u8) -> Option<Self> {
        match value {
            0 => Some(Self::Legitimate),
            1 => Some(Self::BasicAttacker),
            2 => Some(Self::AdvancedAttacker),
            3 => Some(Self::Unknown),
            _ => None,
        }
    }

    pub fn is_attacker(self) -> bool {
        matches!(self, Self::BasicAttacker | Self::AdvancedAttacker)
    }
}

/// Complex baseband samples plus sample-rate metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace<T> {
    samples: Vec<Complex<T>>,
    sample_rate_hz: T,
    origin: OriginLabel,
}

/// Label-free view of a trace. Detection code only ever receives this.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a, T> {
    pub samples: &'a [Complex<T>],
    pub sample_rate_hz: T,
}

impl<T: Real> SignalTrace<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate_hz: T, origin: OriginLabel) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("trace samples"));
        }
        if !(sample_rate_hz > T::zero()) || !sample_rate_hz.is_finite() {
            return Err(invalid("sample rate must be positive and finite"));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::NonFinite("trace samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            origin,
        })
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> T {
        self.sample_rate_hz
    }

    pub fn origin(&self) -> OriginLabel {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_origin(mut self, origin: OriginLabel) -> Self {
        self.origin = origin;
        self
    }

    pub fn observe(&self) -> Observation<'_, T> {
        Observation {
            samples: &self.samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Mean of `|x|^2` over `[start, end)`.
    pub fn mean_power(&self, start: usize, end: usize) -> T {
        let end = end.min(self.samples.len());
        if start >= end {
            return T::zero();
        }
        let total: T = self.samples[start..end].iter().map(|s| s.norm_sqr()).sum();
        total / T::from_usize_lossy(end - start)
    }

    /// Multiplies every sample by `gain`.
    pub fn scaled(&self, gain: Complex<T>) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
            origin: self.origin,
        }
    }
}

/// Per-tag reflection parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagConfig<T> {
    pub reflection_coefficients: Vec<Complex<T>>,
    pub bit_rate_bps: T,
    pub per_tag_delay_samples: Vec<usize>,
    #[serde(default)]
    pub geometry_note: String,
}

impl<T: Real> TagConfig<T> {
    /// Tags with zero reflection delay.
    pub fn new(reflection_coefficients: Vec<Complex<T>>, bit_rate_bps: T) -> Result<Self> {
        let delays = vec![0; reflection_coefficients.len()];
        let tags = Self {
            reflection_coefficients,
            bit_rate_bps,
            per_tag_delay_samples: delays,
            geometry_note: String::new(),
        };
        tags.validate()?;
        Ok(tags)
    }

    pub fn tag_count(&self) -> usize {
        self.reflection_coefficients.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.reflection_coefficients.is_empty() {
            return Err(invalid("at least one tag required"));
        }
        if self.per_tag_delay_samples.len() != self.reflection_coefficients.len() {
            return Err(invalid("per-tag delay count differs from tag count"));
        }
        if !(self.bit_rate_bps > T::zero()) || !self.bit_rate_bps.is_finite() {
            return Err(invalid("bit rate must be positive"));
        }
        Ok(())
    }

    /// Validation that also allows `alpha = 0`, for tag-free reference runs.
    fn validate_for(&self, sample_rate_hz: T) -> Result<()> {
        self.validate()?;
        if self.reflection_coefficients.iter().any(|a| !(a.norm() < T::one())) {
            return Err(invalid("reflection coefficient magnitude must be < 1"));
        }
        if !(self.bit_rate_bps < sample_rate_hz / T::lit(2.0)) {
            return Err(invalid("tag bit rate must be below half the sample rate"));
        }
        Ok(())
    }

    /// Strict check `|alpha| in (0, 1)` for every tag.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        for a in &self.reflection_coefficients {
            let m = a.norm();
            if !(m > T::zero() && m < T::one()) {
                return Err(invalid("reflection coefficient magnitude must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Same tags with every reflection coefficient zeroed.
    pub fn silenced(&self) -> Self {
        Self {
            reflection_coefficients: vec![Complex::new(T::zero(), T::zero()); self.tag_count()],
            ..self.clone()
        }
    }

    /// Only tag `k` keeps its coefficient.
    pub fn isolated(&self, k: usize) -> Self {
        let mut tags = self.silenced();
        tags.reflection_coefficients[k] = self.reflection_coefficients[k];
        tags
    }

    /// Samples per tag bit at `sample_rate_hz`.
    pub fn samples_per_bit(&self, sample_rate_hz: T) -> T {
        sample_rate_hz / self.bit_rate_bps
    }

    /// Tag on/off state `offset` samples into its slot: a 50% duty square
    /// wave that starts "on" and alternates every bit period.
    pub fn bit_state(&self, offset: usize, sample_rate_hz: T) -> bool {
        let bit = (T::from_usize_lossy(offset) * self.bit_rate_bps / sample_rate_hz)
            .floor()
            .to_usize()
            .unwrap_or(0);
        bit % 2 == 0
    }
}

/// One propagation path: complex gain and integer-sample delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path<T> {
    pub gain: Complex<T>,
    pub delay: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec<T> {
    pub paths: Vec<Path<T>>,
    /// Standard deviation of the complex noise, `E|n|^2 = sigma^2`.
    pub noise_sigma: T,
    pub rng_seed: u64,
}

impl<T: Real> ChannelSpec<T> {
    /// Single direct path with unit gain.
    pub fn direct(noise_sigma: T, rng_seed: u64) -> Self {
        Self {
            paths: vec![Path {
                gain: Complex::new(T::one(), T::zero()),
                delay: 0,
            }],
            noise_sigma,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.paths.iter().any(|p| p.delay == 0) {
            return Err(invalid("channel needs a direct path with delay 0"));
        }
        if !(self.noise_sigma >= T::zero()) || !self.noise_sigma.is_finite() {
            return Err(invalid("noise sigma must be non-negative"));
        }
        Ok(())
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn noiseless(&self) -> Self {
        Self {
            noise_sigma: T::zero(),
            ..self.clone()
        }
    }
}

/// Order in which tags reflect, and slot geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSchedule {
    /// Tag index firing at each slot position.
    pub order: Vec<usize>,
    /// Slot length of each tag, indexed by tag.
    pub slot_length_samples: Vec<usize>,
    pub guard_samples: usize,
    /// Samples before the first slot.
    pub lead_in_samples: usize,
}

/// Placement of one tag's slot inside a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub position: usize,
    pub tag: usize,
    pub start: usize,
    pub end: usize,
}

impl TagSchedule {
    /// Equal-length slots in the given order.
    pub fn uniform(order: Vec<usize>, slot_length: usize, guard: usize, lead_in: usize) -> Self {
        let n = order.len();
        Self {
            order,
            slot_length_samples: vec![slot_length; n],
            guard_samples: guard,
            lead_in_samples: lead_in,
        }
    }

    pub fn identity(tag_count: usize, slot_length: usize, guard: usize, lead_in: usize) -> Self {
        Self::uniform((0..tag_count).collect(), slot_length, guard, lead_in)
    }

    /// Same geometry, different order.
    pub fn reordered(&self, order: Vec<usize>) -> Result<Self> {
        let schedule = Self {
            order,
            ..self.clone()
        };
        schedule.validate(self.order.len())?;
        Ok(schedule)
    }

    /// Uniformly random permutation of the tags.
    pub fn shuffled(&self, seed: u64) -> Self {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..self.order.len()).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            ..self.clone()
        }
    }

    pub fn validate(&self, tag_count: usize) -> Result<()> {
        if self.slot_length_samples.len() != tag_count {
            return Err(invalid(format!(
                "{} slot lengths for {} tags",
                self.slot_length_samples.len(),
                tag_count
            )));
        }
        if self.slot_length_samples.iter().any(|&l| l == 0) {
            return Err(invalid("slot lengths must be positive"));
        }
        if let Some(&index) = self.order.iter().find(|&&t| t >= tag_count) {
            return Err(Error::TagIndexOutOfRange { index, tag_count });
        }
        check_permutation(&self.order, tag_count)
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut start = self.lead_in_samples;
        let mut slots = Vec::with_capacity(self.order.len());
        for (position, &tag) in self.order.iter().enumerate() {
            let len = self.slot_length_samples.get(tag).copied().unwrap_or(0);
            slots.push(Slot {
                position,
                tag,
                start,
                end: start + len,
            });
            start += len + self.guard_samples;
        }
        slots
    }

    /// First sample after the last slot.
    pub fn end(&self) -> usize {
        self.slots().last().map_or(self.lead_in_samples, |s| s.end)
    }

    /// `[first slot start, last slot end)`.
    pub fn active_span(&self) -> (usize, usize) {
        (self.lead_in_samples, self.end())
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidPermutation(format!(
            "{} entries for {} tags",
            order.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &t in order {
        if t >= n || seen[t] {
            return Err(Error::InvalidPermutation(format!("{order:?}")));
        }
        seen[t] = true;
    }
    Ok(())
}

/// Source waveform family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulation<T> {
    /// Fixed amplitude, zero phase.
    ConstantEnvelope { amplitude: T },
    /// Unit-magnitude QPSK symbols held for `samples_per_symbol` samples.
    RandomQpsk { samples_per_symbol: usize },
}

/// Transmitted waveform standing in for a protocol message.
pub fn synthesize_source<T: Real>(
    duration_samples: usize,
    modulation: Modulation<T>,
    sample_rate_hz: T,
    seed: u64,
) -> Result<SignalTrace<T>> {
    if duration_samples == 0 {
        return Err(invalid("duration must be at least one sample"));
    }
    let samples = match modulation {
        Modulation::ConstantEnvelope { amplitude } => {
            vec![Complex::new(amplitude, T::zero()); duration_samples]
        }
        Modulation::RandomQpsk { samples_per_symbol } => {
            if samples_per_symbol == 0 {
                return Err(invalid("samples per symbol must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = T::FRAC_1_SQRT_2();
            let mut out = Vec::with_capacity(duration_samples);
            while out.len() < duration_samples {
                let symbol: u8 = rng.gen_range(0..4);
                let re = if symbol & 1 == 0 { h } else { -h };
                let im = if symbol & 2 == 0 { h } else { -h };
                let take = samples_per_symbol.min(duration_samples - out.len());
                out.extend(std::iter::repeat(Complex::new(re, im)).take(take));
            }
            out
        }
    };
    SignalTrace::new(samples, sample_rate_hz, OriginLabel::Unknown)
}

/// Complex Gaussian noise with `E|n|^2 = sigma^2`.
pub(crate) fn complex_noise<T: Real>(rng: &mut ChaCha8Rng, sigma: T) -> Complex<T> {
    let scale = sigma * T::FRAC_1_SQRT_2();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re) * scale, T::lit(im) * scale)
}

/// Tag `k`'s on/off state at absolute sample `i` under `schedule`.
fn tag_active<T: Real>(tags: &TagConfig<T>, slot: &Slot, i: usize, sample_rate_hz: T) -> bool {
    i >= slot.start && i < slot.end && tags.bit_state(i - slot.start, sample_rate_hz)
}

/// Received trace for `source` through `channel` with `tags` reflecting in
/// `schedule` order. The output is `max path delay` samples longer than the
/// source.
pub fn apply_backscatter_channel<T: Real>(
    source: &SignalTrace<T>,
    tags: &TagConfig<T>,
    schedule: &TagSchedule,
    channel: &ChannelSpec<T>,
) -> Result<SignalTrace<T>> {
    let fs = source.sample_rate_hz();
    tags.validate_for(fs)?;
    channel.validate()?;
    schedule.validate(tags.tag_count())?;
    let n_src = source.len();
    let slots = schedule.slots();
    if let Some(last) = slots.last().filter(|s| s.end > n_src) {
        return Err(Error::ScheduleOverflow(format!(
            "slots end at {} beyond source length {}",
            last.end, n_src
        )));
    }

    let out_len = n_src + channel.max_delay();
    let zero = Complex::new(T::zero(), T::zero());
    let src = source.samples();
    let mut out = vec![zero; out_len];

    for path in &channel.paths {
        for (i, &s) in src.iter().enumerate() {
            out[i + path.delay] += path.gain * s;
        }
    }

    for slot in &slots {
        let alpha = tags.reflection_coefficients[slot.tag];
        if alpha == zero {
            continue;
        }
        let delay = tags.per_tag_delay_samples[slot.tag];
        for i in slot.start..slot.end {
            if tag_active(tags, slot, i, fs) {
                let j = i + delay;
                if j < out_len {
                    out[j] += alpha * src[i];
                }
            }
        }
    }

    if channel.noise_sigma > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(channel.rng_seed);
        for s in out.iter_mut() {
            *s += complex_noise(&mut rng, channel.noise_sigma);
        }
    }

    SignalTrace::new(out, fs, source.origin())
}

/// Ground-truth on/off mask of the tag reflections (before tag delays) over
/// a trace of length `len`.
pub fn tag_activity_mask<T: Real>(
    tags: &TagConfig<T>,
    schedule: &TagSchedule,
    sample_rate_hz: T,
    len: usize,
) -> Vec<bool> {
    let mut mask = vec![false; len];
    for slot in schedule.slots() {
        for (i, m) in mask.iter_mut().enumerate().take(slot.end.min(len)).skip(slot.start) {
            *m = tag_active(tags, &slot, i, sample_rate_hz);
        }
    }
    mask
}

/// Coherence time `9 lambda / (16 pi v)` in seconds.
pub fn coherence_time_s<T: Real>(wavelength_m: T, velocity_mps: T) -> Result<T> {
    if !(wavelength_m > T::zero()) || !(velocity_mps > T::zero()) {
        return Err(invalid("wavelength and velocity must be positive"));
    }
    Ok(T::lit(9.0) * wavelength_m / (T::lit(16.0) * T::PI() * velocity_mps))
}

/// Speed of light in m/s, for wavelength conversions.
pub const SPEED_OF_LIGHT_MPS: f64 = 299_792_458.0;
