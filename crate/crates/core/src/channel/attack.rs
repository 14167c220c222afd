use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    apply_backscatter_channel, complex_noise, ChannelSpec, OriginLabel, SignalTrace, TagConfig,
    TagSchedule,
};
use crate::error::{invalid, Result};
use crate::scalar::Real;

/// A received trace together with everything that generated it.
///
/// An advanced attacker is granted this knowledge (up to estimation error)
/// when crafting its forgery.
#[derive(Debug, Clone)]
pub struct Capture<T> {
    pub source: SignalTrace<T>,
    pub tags: TagConfig<T>,
    pub schedule: TagSchedule,
    pub channel: ChannelSpec<T>,
    pub trace: SignalTrace<T>,
}

/// Runs [`apply_backscatter_channel`] and keeps the inputs alongside the output.
pub fn capture<T: Real>(
    source: &SignalTrace<T>,
    tags: &TagConfig<T>,
    schedule: &TagSchedule,
    channel: &ChannelSpec<T>,
) -> Result<Capture<T>> {
    let trace = apply_backscatter_channel(source, tags, schedule, channel)?;
    Ok(Capture {
        source: source.clone(),
        tags: tags.clone(),
        schedule: schedule.clone(),
        channel: channel.clone(),
        trace,
    })
}

fn perturb<T: Real>(rng: &mut ChaCha8Rng, value: Complex<T>, sigma: T) -> Complex<T> {
    if sigma == T::zero() {
        return value;
    }
    value * (Complex::new(T::one(), T::zero()) + complex_noise(rng, sigma))
}

/// Forged trace emulating `reference` as if the tags had fired in
/// `assumed_schedule` order.
///
/// The attacker estimates every path gain and tag coefficient with a
/// relative complex Gaussian error of `estimation_error_sigma`, synthesizes
/// the resulting multipath waveform and transmits it over a single
/// equalized path, so the AP observes the emulation plus its own receiver
/// noise (seeded by `seed`).
pub fn craft_advanced_attack<T: Real>(
    reference: &Capture<T>,
    assumed_schedule: &TagSchedule,
    estimation_error_sigma: T,
    seed: u64,
) -> Result<SignalTrace<T>> {
    if !(estimation_error_sigma >= T::zero()) || !estimation_error_sigma.is_finite() {
        return Err(invalid("estimation error sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut channel = reference.channel.clone();
    for path in channel.paths.iter_mut() {
        path.gain = perturb(&mut rng, path.gain, estimation_error_sigma);
    }
    let mut tags = reference.tags.clone();
    for alpha in tags.reflection_coefficients.iter_mut() {
        *alpha = perturb(&mut rng, *alpha, estimation_error_sigma);
        // an estimate can never exceed a passive reflector
        let max = T::lit(0.999);
        if alpha.norm() >= max {
            *alpha = *alpha * (max / alpha.norm());
        }
    }
    channel.rng_seed = rng.gen();
    let forged = apply_backscatter_channel(&reference.source, &tags, assumed_schedule, &channel)?;
    Ok(forged.with_origin(OriginLabel::AdvancedAttacker))
}

/// Channel seen from a transmitter displaced from the one that produced
/// `channel`.
///
/// Every path gain is multiplied by `1 + divergence * z` with `z` standard
/// complex Gaussian, and every non-direct delay is scaled by
/// `1 + divergence * u`, `u` uniform on `[-1, 1]`. Divergence 0 returns the
/// input channel with a fresh noise seed.
pub fn diverge_channel<T: Real>(channel: &ChannelSpec<T>, divergence: T, seed: u64) -> Result<ChannelSpec<T>> {
    if !(divergence >= T::zero()) || !divergence.is_finite() {
        return Err(invalid("divergence must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = channel.clone();
    for path in out.paths.iter_mut() {
        path.gain = perturb(&mut rng, path.gain, divergence);
        if path.delay > 0 {
            let u: f64 = rng.gen_range(-1.0..=1.0);
            let scaled = path.delay as f64 * (1.0 + divergence.as_f64() * u);
            path.delay = scaled.round().max(1.0) as usize;
        }
    }
    out.rng_seed = rng.gen();
    Ok(out)
}
