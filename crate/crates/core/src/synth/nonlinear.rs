//! Abstract nonlinear texture: a sine carrier phase-modulated by three sine
//! modulators, folded through a normalized `tanh` waveshaper, optionally
//! ring-modulated.
//!
//! The modulation indices wander in a seeded random walk within ±5% of their
//! mapped values, advanced once per block.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ObjectId, Phasor, RampBank, SoundObject};

pub const DEFAULT_RATIOS: [f64; 3] = [1.01, 2.02, 3.98];
const JITTER_SPAN: f64 = 0.05;
const JITTER_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearParams {
    pub carrier_hz: f64,
    pub mod_indices: [f64; 3],
    pub mod_ratios: [f64; 3],
    pub drive: f64,
    pub rm_hz: f64,
    pub amplitude: f64,
    pub jitter_seed: u64,
}

impl Default for NonlinearParams {
    fn default() -> Self {
        Self {
            carrier_hz: 110.0,
            mod_indices: [0.0; 3],
            mod_ratios: DEFAULT_RATIOS,
            drive: 1.0,
            rm_hz: 0.0,
            amplitude: 0.0,
            jitter_seed: 0,
        }
    }
}

impl NonlinearParams {
    /// Control values in schema order (ratios and seed are structural).
    pub fn to_values(&self) -> [f64; 7] {
        let i = self.mod_indices;
        [self.carrier_hz, i[0], i[1], i[2], self.drive, self.rm_hz, self.amplitude]
    }
}

pub struct Nonlinear {
    sample_rate: f64,
    ratios: [f64; 3],
    rng: ChaCha8Rng,
    jitter: [f64; 3],
    mapped: [f64; 7],
    ramp: RampBank<7>,
    carrier: Phasor,
    mods: [Phasor; 3],
    ring: Phasor,
}

impl Nonlinear {
    pub fn new(sample_rate: f64, p: &NonlinearParams) -> Self {
        let v = p.to_values();
        Self {
            sample_rate,
            ratios: p.mod_ratios.map(|r| if r > 0.0 { r } else { 1.0 }),
            rng: ChaCha8Rng::seed_from_u64(p.jitter_seed),
            jitter: [1.0; 3],
            mapped: v,
            ramp: RampBank::new(v),
            carrier: Phasor::default(),
            mods: [Phasor::default(); 3],
            ring: Phasor::default(),
        }
    }

    pub fn set_params(&mut self, p: &NonlinearParams) {
        self.mapped = p.to_values();
    }

    /// Modulator frequency ratios; fixed while a scene is active.
    pub fn set_ratios(&mut self, ratios: [f64; 3]) {
        self.ratios = ratios.map(|r| if r > 0.0 { r } else { 1.0 });
    }

    /// Current multiplicative index jitter, each within [0.95, 1.05].
    pub fn jitter(&self) -> [f64; 3] {
        self.jitter
    }

    fn advance_jitter(&mut self) {
        for j in &mut self.jitter {
            let step: f64 = self.rng.random_range(-JITTER_STEP..=JITTER_STEP);
            *j = (*j + step).clamp(1.0 - JITTER_SPAN, 1.0 + JITTER_SPAN);
        }
    }
}

/// One sample of the shaped signal for fixed phases, in [-1, 1].
#[inline]
pub fn shape(carrier_phase: f64, mod_terms: f64, drive: f64) -> f64 {
    let x = (std::f64::consts::TAU * carrier_phase + mod_terms).sin();
    let d = drive.max(1e-3);
    (d * x).tanh() / d.tanh()
}

impl SoundObject for Nonlinear {
    fn id(&self) -> ObjectId {
        ObjectId::Nonlinear
    }

    fn set_targets(&mut self, values: &[f64]) {
        self.mapped.copy_from_slice(&values[..7]);
    }

    fn process(&mut self, out: &mut [f32]) {
        self.advance_jitter();
        let mut target = self.mapped;
        for k in 0..3 {
            target[1 + k] *= self.jitter[k];
        }
        self.ramp.set_target(target, out.len());
        let inv_sr = 1.0 / self.sample_rate;
        for o in out.iter_mut() {
            let [fc, i1, i2, i3, drive, rm_hz, amp] = self.ramp.tick();
            let idx = [i1, i2, i3];
            let mut pm = 0.0;
            for k in 0..3 {
                pm += idx[k] * self.mods[k].sin(fc * self.ratios[k] * inv_sr);
            }
            let mut y = shape(self.carrier.next(fc * inv_sr), pm, drive);
            if rm_hz > 0.0 {
                y *= self.ring.sin(rm_hz * inv_sr);
            }
            *o = (amp.clamp(0.0, 1.0) * y) as f32;
        }
    }

    fn reset(&mut self) {
        self.carrier = Phasor::default();
        self.mods = [Phasor::default(); 3];
        self.ring = Phasor::default();
        self.jitter = [1.0; 3];
        self.ramp.snap(self.mapped);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_bounded_by_amplitude() {
        let p = NonlinearParams {
            drive: 10.0,
            mod_indices: [8.0, 8.0, 8.0],
            amplitude: 1.0,
            rm_hz: 37.0,
            ..Default::default()
        };
        let mut n = Nonlinear::new(48_000.0, &p);
        let mut buf = [0.0f32; 512];
        for _ in 0..100 {
            n.process(&mut buf);
            assert!(buf.iter().all(|s| s.abs() <= 1.0));
        }
    }

    #[test]
    fn jitter_trajectory_is_seeded() {
        let p = NonlinearParams {
            jitter_seed: 99,
            mod_indices: [1.0, 2.0, 3.0],
            ..Default::default()
        };
        let mut a = Nonlinear::new(48_000.0, &p);
        let mut b = Nonlinear::new(48_000.0, &p);
        let mut buf = [0.0f32; 64];
        for _ in 0..500 {
            a.process(&mut buf);
            b.process(&mut buf);
            assert_eq!(a.jitter(), b.jitter());
            assert!(a.jitter().iter().all(|j| (0.95..=1.05).contains(j)));
        }
    }

    #[test]
    fn unit_drive_shaper_is_odd_and_normalized() {
        assert!((shape(0.25, 0.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((shape(0.75, 0.0, 1.0) + 1.0).abs() < 1e-12);
        assert_eq!(shape(0.0, 0.0, 5.0), 0.0);
    }
}
