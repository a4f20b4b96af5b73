//! Stochastic stream of bubbles.
//!
//! Onsets form a Poisson process of rate `2 + 198 * density * speed` per
//! second. Each bubble draws a log-uniform radius from the configured range
//! and an amplitude proportional to `radius / radius_max`. The summed stream
//! passes through the scrub delay.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bubble::{BubbleParams, BubbleVoice, RADIUS_MAX, RADIUS_MIN};
use super::scrub::ScrubDelay;
use super::{params_of, ObjectId, RampBank, SoundObject, PARAMS};

const VOICES: usize = 64;
/// 64 voices at this peak gain stay below 4.0 even fully in phase.
const BUBBLE_GAIN: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidFlowParams {
    pub speed: f64,
    pub density: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub scrub_amount: f64,
}

impl FluidFlowParams {
    pub fn from_values(v: &[f64]) -> Self {
        Self {
            speed: v[0],
            density: v[1],
            radius_min: v[2],
            radius_max: v[3],
            scrub_amount: v[4],
        }
    }

    pub fn to_values(&self) -> [f64; 5] {
        [self.speed, self.density, self.radius_min, self.radius_max, self.scrub_amount]
    }

    /// Onset rate in events per second.
    pub fn rate(&self) -> f64 {
        2.0 + 198.0 * self.density.clamp(0.0, 1.0) * self.speed.clamp(0.0, 1.0)
    }

    /// Ordered radius range inside the physical limits, with `min < max`.
    pub fn radius_range(&self) -> (f64, f64) {
        let a = self.radius_min.clamp(RADIUS_MIN, RADIUS_MAX);
        let b = self.radius_max.clamp(RADIUS_MIN, RADIUS_MAX);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if hi / lo < 1.001 {
            let lo = lo.min(RADIUS_MAX / 1.001);
            (lo, lo * 1.001)
        } else {
            (lo, hi)
        }
    }
}

impl Default for FluidFlowParams {
    fn default() -> Self {
        let mut v = [0.0; 5];
        for (x, s) in v.iter_mut().zip(&PARAMS[params_of(ObjectId::FluidFlow)]) {
            *x = s.default;
        }
        Self::from_values(&v)
    }
}

pub struct FluidFlow {
    sample_rate: f64,
    rng: ChaCha8Rng,
    ramp: RampBank<5>,
    pending: [f64; 5],
    voices: [BubbleVoice; VOICES],
    /// Remaining unit-rate exponential time until the next onset.
    countdown: f64,
    scrub: ScrubDelay,
    onsets: u64,
}

impl FluidFlow {
    pub fn new(sample_rate: f64, seed: u64) -> Self {
        let init = FluidFlowParams::default().to_values();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let countdown = exp1(&mut rng);
        Self {
            sample_rate,
            rng,
            ramp: RampBank::new(init),
            pending: init,
            voices: [BubbleVoice::default(); VOICES],
            countdown,
            scrub: ScrubDelay::new(sample_rate),
            onsets: 0,
        }
    }

    pub fn set_params(&mut self, p: &FluidFlowParams) {
        self.pending = p.to_values();
    }

    /// Total onsets since construction.
    pub fn onsets(&self) -> u64 {
        self.onsets
    }

    fn spawn(&mut self, p: &FluidFlowParams) {
        let (lo, hi) = p.radius_range();
        let u: f64 = self.rng.random();
        let radius = lo * (hi / lo).powf(u);
        let params = BubbleParams {
            radius_m: radius,
            rise: 0.5 * p.speed.clamp(0.0, 1.0),
            amplitude: BUBBLE_GAIN * radius / hi,
        };
        let slot = match self.voices.iter().position(|v| !v.is_active()) {
            Some(i) => i,
            None => {
                let mut quietest = 0;
                for (i, v) in self.voices.iter().enumerate() {
                    if v.level() < self.voices[quietest].level() {
                        quietest = i;
                    }
                }
                quietest
            }
        };
        self.voices[slot].start(&params, self.sample_rate);
        self.onsets += 1;
    }
}

fn exp1(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

impl SoundObject for FluidFlow {
    fn id(&self) -> ObjectId {
        ObjectId::FluidFlow
    }

    fn set_targets(&mut self, values: &[f64]) {
        self.pending.copy_from_slice(&values[..5]);
    }

    fn process(&mut self, out: &mut [f32]) {
        self.ramp.set_target(self.pending, out.len());
        let dt = 1.0 / self.sample_rate;
        let mut p = FluidFlowParams::default();
        for o in out.iter_mut() {
            p = FluidFlowParams::from_values(&self.ramp.tick());
            self.countdown -= p.rate() * dt;
            while self.countdown <= 0.0 {
                self.spawn(&p);
                self.countdown += exp1(&mut self.rng);
            }
            let y: f64 = self.voices.iter_mut().map(BubbleVoice::next).sum();
            *o = y as f32;
        }
        self.scrub.process(out, p.scrub_amount);
    }

    fn reset(&mut self) {
        for v in &mut self.voices {
            v.stop();
        }
        self.scrub.reset();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(ff: &mut FluidFlow, seconds: f64) -> Vec<f32> {
        let n = (seconds * 48_000.0) as usize / 256;
        let mut all = Vec::with_capacity(n * 256);
        let mut buf = [0.0f32; 256];
        for _ in 0..n {
            ff.process(&mut buf);
            all.extend_from_slice(&buf);
        }
        all
    }

    #[test]
    fn deterministic_for_seed() {
        let p = FluidFlowParams {
            speed: 0.7,
            density: 0.6,
            scrub_amount: 0.5,
            ..Default::default()
        };
        let mut a = FluidFlow::new(48_000.0, 11);
        let mut b = FluidFlow::new(48_000.0, 11);
        a.set_params(&p);
        b.set_params(&p);
        let ra = render(&mut a, 2.0);
        let rb = render(&mut b, 2.0);
        assert!(ra.iter().zip(&rb).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(ra.iter().any(|&s| s != 0.0));
    }

    #[test]
    fn rate_law() {
        let p = FluidFlowParams {
            speed: 0.0,
            density: 0.0,
            ..Default::default()
        };
        assert_eq!(p.rate(), 2.0);
        let p = FluidFlowParams {
            speed: 1.0,
            density: 1.0,
            ..Default::default()
        };
        assert_eq!(p.rate(), 200.0);
    }

    #[test]
    fn crossed_radius_range_is_reordered() {
        let p = FluidFlowParams {
            radius_min: 0.01,
            radius_max: 0.002,
            ..Default::default()
        };
        assert_eq!(p.radius_range(), (0.002, 0.01));
        let p = FluidFlowParams {
            radius_min: 0.02,
            radius_max: 0.02,
            ..Default::default()
        };
        let (lo, hi) = p.radius_range();
        assert!(lo < hi && hi <= RADIUS_MAX + 1e-12);
    }

    #[test]
    fn dense_stream_counts_near_rate() {
        let mut ff = FluidFlow::new(48_000.0, 3);
        ff.set_params(&FluidFlowParams {
            speed: 1.0,
            density: 1.0,
            ..Default::default()
        });
        render(&mut ff, 10.0);
        let n = ff.onsets() as f64;
        // 10 s at 200/s, 3 sigma = 3 * sqrt(2000)
        assert!((n - 2000.0).abs() < 3.0 * 2000f64.sqrt(), "{n}");
    }
}
