//! Scraping texture: Poisson-timed noise grains exciting a small modal body.
//!
//! Grains arrive at `200 * velocity` per second. Each is a Hann-windowed
//! burst of low-passed noise lasting `1 + 19 * grain` ms; higher `grain`
//! narrows the noise band. `force` scales grain amplitude.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filters::{Biquad, OnePole};
use super::{ObjectId, RampBank, SoundObject, SILENCE};

const POOL: usize = 8;
const GRAIN_GAIN: f64 = 0.2;
const MODES_HZ: [f64; 3] = [520.0, 1370.0, 2890.0];
const MODE_Q: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScrapingParams {
    pub force: f64,
    pub grain: f64,
    pub velocity: f64,
}

impl ScrapingParams {
    pub fn from_values(v: &[f64]) -> Self {
        Self {
            force: v[0],
            grain: v[1],
            velocity: v[2],
        }
    }

    pub fn to_values(&self) -> [f64; 3] {
        [self.force, self.grain, self.velocity]
    }

    pub fn rate(&self) -> f64 {
        200.0 * self.velocity.clamp(0.0, 1.0)
    }

    pub fn grain_ms(&self) -> f64 {
        1.0 + 19.0 * self.grain.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Grain {
    pos: usize,
    len: usize,
    amp: f64,
    coeff: f64,
    lp: OnePole,
}

impl Grain {
    fn active(&self) -> bool {
        self.pos < self.len
    }
}

pub struct Scraping {
    sample_rate: f64,
    rng: ChaCha8Rng,
    ramp: RampBank<3>,
    pending: [f64; 3],
    grains: [Grain; POOL],
    next: usize,
    countdown: f64,
    modes: [Biquad; 3],
    count: u64,
}

impl Scraping {
    pub fn new(sample_rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let countdown = -(1.0 - rng.random::<f64>()).ln();
        let init = [0.0, 0.5, 0.0];
        Self {
            sample_rate,
            rng,
            ramp: RampBank::new(init),
            pending: init,
            grains: [Grain::default(); POOL],
            next: 0,
            countdown,
            modes: MODES_HZ.map(|f| Biquad::bandpass(f, sample_rate, MODE_Q)),
            count: 0,
        }
    }

    pub fn set_params(&mut self, p: &ScrapingParams) {
        self.pending = p.to_values();
    }

    /// Grains started since construction.
    pub fn grains(&self) -> u64 {
        self.count
    }

    fn spawn(&mut self, p: &ScrapingParams) {
        let g = p.grain.clamp(0.0, 1.0);
        let cutoff = 300.0 + 12_000.0 * (1.0 - g);
        self.grains[self.next] = Grain {
            pos: 0,
            len: ((p.grain_ms() * 1e-3 * self.sample_rate).round() as usize).max(2),
            amp: GRAIN_GAIN * p.force.clamp(0.0, 1.0),
            coeff: OnePole::coeff(cutoff, self.sample_rate),
            lp: OnePole::default(),
        };
        self.next = (self.next + 1) % POOL;
        self.count += 1;
    }
}

impl SoundObject for Scraping {
    fn id(&self) -> ObjectId {
        ObjectId::Scraping
    }

    fn set_targets(&mut self, values: &[f64]) {
        self.pending.copy_from_slice(&values[..3]);
    }

    fn process(&mut self, out: &mut [f32]) {
        self.ramp.set_target(self.pending, out.len());
        let dt = 1.0 / self.sample_rate;
        for o in out.iter_mut() {
            let p = ScrapingParams::from_values(&self.ramp.tick());
            self.countdown -= p.rate() * dt;
            while self.countdown <= 0.0 {
                self.spawn(&p);
                self.countdown += -(1.0 - self.rng.random::<f64>()).ln();
            }
            let mut excitation = 0.0;
            for g in self.grains.iter_mut().filter(|g| g.active()) {
                let noise: f64 = self.rng.random::<f64>() * 2.0 - 1.0;
                let w = 0.5 - 0.5 * (std::f64::consts::TAU * g.pos as f64 / (g.len - 1) as f64).cos();
                excitation += g.amp * w * g.lp.process(noise, g.coeff);
                g.pos += 1;
            }
            let body: f64 = self.modes.iter_mut().map(|m| m.process(excitation)).sum();
            *o = (0.5 * excitation + body / 3.0) as f32;
        }
        if self.grains.iter().all(|g| !g.active())
            && self.modes.iter().all(|m| m.state_peak() < SILENCE)
        {
            self.modes.iter_mut().for_each(Biquad::reset);
        }
    }

    fn reset(&mut self) {
        for g in &mut self.grains {
            g.pos = g.len;
        }
        self.modes.iter_mut().for_each(Biquad::reset);
    }
}
