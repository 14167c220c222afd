//! Randomized deployments and two-message authentication sessions.
//!
//! Each session is a pair of messages received at the AP: message 1 with the
//! tags in the reference order and message 3 with a secret random order. The
//! claimed sender of message 3 is either the legitimate device (slightly
//! drifted channel), a basic attacker elsewhere (diverged channel, power
//! matched) or an advanced attacker replaying an emulation of the device's
//! signature with a guessed tag order.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    apply_backscatter_channel, capture, craft_advanced_attack, diverge_channel, synthesize_source, ChannelSpec,
    Modulation, OriginLabel, Path, SignalTrace, TagConfig, TagSchedule,
};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Geometry and radio parameters shared by every session of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Deployment {
    pub tag_count: usize,
    pub sample_rate_hz: f64,
    pub bit_rate_bps: f64,
    pub lead_in_samples: usize,
    /// Room for all slots and guards.
    pub tag_region_samples: usize,
    pub tail_samples: usize,
    pub guard_samples: usize,
    pub noise_sigma: f64,
    pub source_amplitude: f64,
    /// Direct-path phase is drawn uniformly from `[-x, x]`.
    pub direct_phase_spread_rad: f64,
    pub weak_paths: usize,
    pub weak_gain_range: (f64, f64),
    pub weak_delay_range: (usize, usize),
    /// Tag magnitudes are spread evenly over this range.
    pub tag_magnitude_range: (f64, f64),
    /// Tag phases sit within this distance of 0 or pi.
    pub tag_phase_spread_rad: f64,
    /// Channel drift of the legitimate device between its two messages.
    pub legit_jitter: f64,
    /// Attackers scale their transmit power to the device's received power.
    pub power_matching: bool,
}

impl Default for Deployment {
    fn default() -> Self {
        Self {
            tag_count: 3,
            sample_rate_hz: 1e6,
            bit_rate_bps: 1e4,
            lead_in_samples: 500,
            tag_region_samples: 4400,
            tail_samples: 500,
            guard_samples: 100,
            noise_sigma: 0.02,
            source_amplitude: 1.0,
            direct_phase_spread_rad: 0.3,
            weak_paths: 2,
            weak_gain_range: (0.03, 0.1),
            weak_delay_range: (3, 20),
            tag_magnitude_range: (0.2, 0.5),
            tag_phase_spread_rad: 0.2,
            legit_jitter: 0.0,
            power_matching: true,
        }
    }
}

impl Deployment {
    pub fn with_tags(tag_count: usize) -> Self {
        Self {
            tag_count,
            ..Self::default()
        }
    }

    pub fn samples_per_bit(&self) -> usize {
        (self.sample_rate_hz / self.bit_rate_bps).round() as usize
    }

    /// Longest slot holding an odd number of whole bits (so it begins and
    /// ends "on") such that every slot and guard fits in the tag region.
    pub fn slot_length(&self) -> Result<usize> {
        if self.tag_count == 0 {
            return Err(invalid("at least one tag required"));
        }
        let bit = self.samples_per_bit();
        if bit == 0 {
            return Err(invalid("bit period shorter than a sample"));
        }
        let guards = (self.tag_count - 1) * self.guard_samples;
        let room = self.tag_region_samples.checked_sub(guards).unwrap_or(0) / self.tag_count;
        let mut bits = room / bit;
        if bits % 2 == 0 {
            bits = bits.saturating_sub(1);
        }
        if bits == 0 {
            return Err(Error::ScheduleOverflow(format!(
                "{} tags do not fit in {} samples",
                self.tag_count, self.tag_region_samples
            )));
        }
        Ok(bits * bit)
    }

    /// Identity-order schedule used for message 1.
    pub fn reference_schedule(&self) -> Result<TagSchedule> {
        Ok(TagSchedule::identity(
            self.tag_count,
            self.slot_length()?,
            self.guard_samples,
            self.lead_in_samples,
        ))
    }

    pub fn message_len(&self) -> usize {
        self.lead_in_samples + self.tag_region_samples + self.tail_samples
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz > 0.0) || !(self.bit_rate_bps > 0.0) {
            return Err(invalid("rates must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.source_amplitude > 0.0) || !(self.legit_jitter >= 0.0) {
            return Err(invalid("noise, jitter and amplitude must be non-negative"));
        }
        let (lo, hi) = self.tag_magnitude_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(invalid("tag magnitudes must lie in (0, 1)"));
        }
        if self.weak_delay_range.0 == 0 || self.weak_delay_range.0 > self.weak_delay_range.1 {
            return Err(invalid("weak path delays must be positive and ordered"));
        }
        self.slot_length().map(|_| ())
    }

    /// Draws one tag set and device-to-AP channel.
    pub fn environment<T: Real>(&self, seed: u64) -> Result<Environment<T>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let polar = |m: f64, phase: f64| Complex::from_polar(T::lit(m), T::lit(phase));

        let phi = rng.gen_range(-1.0..=1.0) * self.direct_phase_spread_rad;
        let mut paths = vec![Path {
            gain: polar(1.0, phi),
            delay: 0,
        }];
        for _ in 0..self.weak_paths {
            let (g0, g1) = self.weak_gain_range;
            let (d0, d1) = self.weak_delay_range;
            paths.push(Path {
                gain: polar(rng.gen_range(g0..=g1), rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
                delay: rng.gen_range(d0..=d1),
            });
        }
        let channel = ChannelSpec {
            paths,
            noise_sigma: T::lit(self.noise_sigma),
            rng_seed: rng.gen(),
        };

        let (lo, hi) = self.tag_magnitude_range;
        let k = self.tag_count;
        let mut magnitudes: Vec<f64> = (0..k)
            .map(|i| if k == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 })
            .collect();
        use rand::seq::SliceRandom;
        magnitudes.shuffle(&mut rng);
        let alphas = magnitudes
            .into_iter()
            .map(|m| {
                let base = if rng.gen_bool(0.5) { 0.0 } else { std::f64::consts::PI };
                polar(m, base + phi + rng.gen_range(-1.0..=1.0) * self.tag_phase_spread_rad)
            })
            .collect();
        let tags = TagConfig::new(alphas, T::lit(self.bit_rate_bps))?;
        Ok(Environment {
            tags,
            channel,
            reference: self.reference_schedule()?,
        })
    }

    pub(crate) fn source<T: Real>(&self, amplitude: f64) -> Result<SignalTrace<T>> {
        synthesize_source(
            self.message_len(),
            Modulation::ConstantEnvelope {
                amplitude: T::lit(amplitude),
            },
            T::lit(self.sample_rate_hz),
            0,
        )
    }
}

/// Tags plus the legitimate device's channel to the AP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment<T> {
    pub tags: TagConfig<T>,
    pub channel: ChannelSpec<T>,
    pub reference: TagSchedule,
}

/// Sender of message 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Actor {
    Legitimate,
    BasicAttacker { divergence: f64 },
    /// Knows the device channel up to `estimation_error` but must guess the
    /// tag order.
    AdvancedAttacker { estimation_error: f64 },
}

impl Actor {
    pub fn origin(&self) -> OriginLabel {
        match self {
            Actor::Legitimate => OriginLabel::Legitimate,
            Actor::BasicAttacker { .. } => OriginLabel::BasicAttacker,
            Actor::AdvancedAttacker { .. } => OriginLabel::AdvancedAttacker,
        }
    }
}

/// Two received messages plus the schedules the AP commanded.
#[derive(Debug, Clone, PartialEq)]
pub struct Session<T> {
    pub message1: SignalTrace<T>,
    pub message3: SignalTrace<T>,
    pub schedule1: TagSchedule,
    pub schedule3: TagSchedule,
    /// Tag order an advanced attacker emulated.
    pub assumed_order: Option<Vec<usize>>,
}

/// Message from the legitimate device: the environment channel drifted by
/// `legit_jitter`.
pub fn device_frame<T: Real>(deployment: &Deployment, env: &Environment<T>, schedule: &TagSchedule, seed: u64) -> Result<SignalTrace<T>> {
    let source = deployment.source::<T>(deployment.source_amplitude)?;
    let drifted = diverge_channel(&env.channel, T::lit(deployment.legit_jitter), seed)?;
    Ok(apply_backscatter_channel(&source, &env.tags, schedule, &drifted)?.with_origin(OriginLabel::Legitimate))
}

/// Channel from an attacker displaced by `divergence`.
pub fn attacker_channel<T: Real>(env: &Environment<T>, divergence: f64, seed: u64) -> Result<ChannelSpec<T>> {
    diverge_channel(&env.channel, T::lit(divergence), seed)
}

/// Message from a transmitter behind `channel`, power matched to the device
/// when the deployment asks for it. Noise is seeded by `seed`.
pub fn attacker_frame<T: Real>(
    deployment: &Deployment,
    env: &Environment<T>,
    channel: &ChannelSpec<T>,
    schedule: &TagSchedule,
    seed: u64,
) -> Result<SignalTrace<T>> {
    let unit = deployment.source::<T>(deployment.source_amplitude)?;
    let amplitude = if deployment.power_matching {
        let quiet = |ch: &ChannelSpec<T>| -> Result<f64> {
            let t = apply_backscatter_channel(&unit, &env.tags, schedule, &ch.noiseless())?;
            Ok(t.mean_power(0, t.len()).as_f64())
        };
        let p_device = quiet(&env.channel)?;
        let p_attacker = quiet(channel)?;
        if !(p_attacker > 0.0) {
            return Err(invalid("attacker channel carries no power"));
        }
        deployment.source_amplitude * (p_device / p_attacker).sqrt()
    } else {
        deployment.source_amplitude
    };
    let source = deployment.source::<T>(amplitude)?;
    Ok(apply_backscatter_channel(&source, &env.tags, schedule, &channel.with_seed(seed))?
        .with_origin(OriginLabel::BasicAttacker))
}

/// Simulates one session in `env`. Every random choice derives from `seed`.
pub fn simulate_session<T: Real>(deployment: &Deployment, env: &Environment<T>, actor: Actor, seed: u64) -> Result<Session<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule3 = env.reference.shuffled(rng.gen());
    let guess = env.reference.shuffled(rng.gen());
    simulate_session_with(deployment, env, actor, &schedule3, &guess, rng.gen())
}

/// Session with the message-3 schedule and the advanced attacker's guessed
/// order fixed by the caller, e.g. shared by several APs hearing the same
/// exchange. `guess` is ignored for other actors.
pub fn simulate_session_with<T: Real>(
    deployment: &Deployment,
    env: &Environment<T>,
    actor: Actor,
    schedule3: &TagSchedule,
    guess: &TagSchedule,
    seed: u64,
) -> Result<Session<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule1 = env.reference.clone();
    let source = deployment.source::<T>(deployment.source_amplitude)?;

    let channel1 = env.channel.with_seed(rng.gen());
    let reference = capture(&source, &env.tags, &schedule1, &channel1)?;
    let message1 = reference.trace.clone().with_origin(OriginLabel::Legitimate);

    let mut assumed_order = None;
    let message3 = match actor {
        Actor::Legitimate => device_frame(deployment, env, schedule3, rng.gen())?,
        Actor::BasicAttacker { divergence } => {
            let channel = attacker_channel(env, divergence, rng.gen())?;
            attacker_frame(deployment, env, &channel, schedule3, rng.gen())?
        }
        Actor::AdvancedAttacker { estimation_error } => {
            assumed_order = Some(guess.order.clone());
            craft_advanced_attack(&reference, guess, T::lit(estimation_error), rng.gen())?
        }
    };
    Ok(Session {
        message1,
        message3: message3.with_origin(actor.origin()),
        schedule1,
        schedule3: schedule3.clone(),
        assumed_order,
    })
}

/// Fresh environment and session from a single trial seed.
pub fn simulate_trial<T: Real>(deployment: &Deployment, actor: Actor, seed: u64) -> Result<Session<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = deployment.environment::<T>(rng.gen())?;
    simulate_session(deployment, &env, actor, rng.gen())
}
