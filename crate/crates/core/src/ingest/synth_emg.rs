//! Synthetic EMG: band-limited Gaussian noise at a per-profile level.
//!
//! White noise is shaped by a 20 Hz high-pass and a 95 Hz low-pass (both
//! second-order Butterworth at the 200 Hz armband rate) and rescaled so the
//! shaped signal has the profile's standard deviation before rounding and
//! clipping to int8.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Device, EmgFrame, CHANNELS, EMG_PERIOD_US, EMG_RATE_HZ};
use crate::error::{Error, Result};
use crate::synth::derive_seed;
use crate::synth::filters::Biquad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Rest,
    Micro,
    Meso,
    Macro,
}

impl Profile {
    /// Target standard deviation in quantization units.
    pub fn sigma(self) -> f64 {
        match self {
            Profile::Rest => 1.0,
            Profile::Micro => 5.0,
            Profile::Meso => 25.0,
            Profile::Macro => 60.0,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rest" => Ok(Profile::Rest),
            "micro" => Ok(Profile::Micro),
            "meso" => Ok(Profile::Meso),
            "macro" => Ok(Profile::Macro),
            other => Err(format!("unknown profile '{other}' (rest|micro|meso|macro)")),
        }
    }
}

struct ShapedNoise {
    rng: ChaCha8Rng,
    hp: Biquad,
    lp: Biquad,
    scale: f64,
}

impl ShapedNoise {
    fn new(seed: u64, sigma: f64) -> Self {
        let hp = Biquad::highpass(20.0, EMG_RATE_HZ, std::f64::consts::FRAC_1_SQRT_2);
        let lp = Biquad::lowpass(95.0, EMG_RATE_HZ, std::f64::consts::FRAC_1_SQRT_2);
        let mut s = Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            hp,
            lp,
            scale: sigma / noise_gain(),
        };
        // Skip the filter start-up transient.
        for _ in 0..400 {
            s.next();
        }
        s
    }

    fn next(&mut self) -> f64 {
        let w: f64 = StandardNormal.sample(&mut self.rng);
        self.scale * self.lp.process(self.hp.process(w))
    }
}

/// RMS gain of the shaping filters for unit white noise, from the impulse response.
fn noise_gain() -> f64 {
    let mut hp = Biquad::highpass(20.0, EMG_RATE_HZ, std::f64::consts::FRAC_1_SQRT_2);
    let mut lp = Biquad::lowpass(95.0, EMG_RATE_HZ, std::f64::consts::FRAC_1_SQRT_2);
    let mut energy = 0.0;
    for n in 0..4000 {
        let x = if n == 0 { 1.0 } else { 0.0 };
        let y = lp.process(hp.process(x));
        energy += y * y;
    }
    energy.sqrt()
}

fn check_duration(duration_s: f64) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::Invalid(format!(
            "synthetic EMG duration must be positive, got {duration_s}"
        )));
    }
    Ok((duration_s * EMG_RATE_HZ).round() as usize)
}

/// Frames for one device, starting at t = 0 and spaced 5 ms apart.
pub fn synth_emg_device(
    device: Device,
    profile: Profile,
    seed: u64,
    duration_s: f64,
) -> Result<Vec<EmgFrame>> {
    let n = check_duration(duration_s)?;
    let mut gens: Vec<ShapedNoise> = (0..CHANNELS)
        .map(|ch| {
            let s = derive_seed(seed, &format!("emg/{}/{ch}", device.as_str()));
            ShapedNoise::new(s, profile.sigma())
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let mut channels = [0i8; CHANNELS];
            for (c, g) in channels.iter_mut().zip(gens.iter_mut()) {
                *c = g.next().round().clamp(-128.0, 127.0) as i8;
            }
            EmgFrame::new(device, i as u64 * EMG_PERIOD_US, channels)
        })
        .collect())
}

/// Single-device (left arm) synthetic stream.
pub fn synth_emg(profile: Profile, seed: u64, duration_s: f64) -> Result<Vec<EmgFrame>> {
    synth_emg_device(Device::LeftArm, profile, seed, duration_s)
}

/// Both armbands, interleaved in timestamp order (left arm first on ties).
pub fn synth_session(profile: Profile, seed: u64, duration_s: f64) -> Result<Vec<EmgFrame>> {
    let left = synth_emg_device(Device::LeftArm, profile, seed, duration_s)?;
    let right = synth_emg_device(Device::RightCalf, profile, seed, duration_s)?;
    Ok(left
        .into_iter()
        .zip(right)
        .flat_map(|(l, r)| [l, r])
        .collect())
}
