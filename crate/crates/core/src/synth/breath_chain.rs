//! Breath effect chain: a Schroeder reverberator feeding three
//! cross-coupled delay lines.
//!
//! Four parallel feedback combs (gain `10^(-3 d / rt60)`, input scaled by
//! `1 - g` for unit DC gain) are summed and passed through two series
//! allpasses. The result drives a three-line network whose feedback matrix
//! is `feedback * H`, with `H = I - (2/3) 1 1^T` orthogonal, so the loop's
//! spectral radius is exactly `feedback`. Network taps are added to the
//! reverb in proportion to `feedback`; at `feedback = 0` the chain is a plain
//! Schroeder reverberator.

use super::filters::DelayLine;
use super::RampBank;

pub const COMB_DELAYS_MS: [f64; 4] = [29.7, 37.1, 41.1, 43.7];
pub const ALLPASS_DELAYS_MS: [f64; 2] = [5.0, 1.7];
pub const ALLPASS_GAIN: f64 = 0.7;
pub const NETWORK_DELAYS_MS: [f64; 3] = [150.0, 270.0, 390.0];
pub const MAX_FEEDBACK: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreathChainParams {
    pub rt60_s: f64,
    pub feedback: f64,
    pub mix: f64,
}

impl Default for BreathChainParams {
    fn default() -> Self {
        Self {
            rt60_s: 2.0,
            feedback: 0.0,
            mix: 0.5,
        }
    }
}

impl BreathChainParams {
    pub fn from_values(v: &[f64]) -> Self {
        Self {
            rt60_s: v[0],
            feedback: v[1],
            mix: v[2],
        }
    }

    pub fn to_values(&self) -> [f64; 3] {
        [self.rt60_s, self.feedback, self.mix]
    }
}

/// Comb feedback gain for a delay of `delay_s` and a target decay time.
pub fn comb_gain(delay_s: f64, rt60_s: f64) -> f64 {
    10f64.powf(-3.0 * delay_s / rt60_s)
}

struct Comb {
    line: DelayLine,
    delay: usize,
    g: f64,
}

struct Allpass {
    line: DelayLine,
    delay: usize,
}

pub struct BreathChain {
    sample_rate: f64,
    combs: [Comb; 4],
    allpasses: [Allpass; 2],
    network: [DelayLine; 3],
    network_delay: [usize; 3],
    ramp: RampBank<3>,
    pending: [f64; 3],
}

fn samples(ms: f64, sr: f64) -> usize {
    ((ms * 1e-3 * sr).round() as usize).max(1)
}

impl BreathChain {
    pub fn new(sample_rate: f64) -> Self {
        let init = BreathChainParams::default();
        let combs = COMB_DELAYS_MS.map(|ms| {
            let d = samples(ms, sample_rate);
            Comb {
                line: DelayLine::new(d),
                delay: d,
                g: comb_gain(d as f64 / sample_rate, init.rt60_s),
            }
        });
        let allpasses = ALLPASS_DELAYS_MS.map(|ms| {
            let d = samples(ms, sample_rate);
            Allpass {
                line: DelayLine::new(d),
                delay: d,
            }
        });
        let network_delay = NETWORK_DELAYS_MS.map(|ms| samples(ms, sample_rate));
        Self {
            sample_rate,
            combs,
            allpasses,
            network: network_delay.map(DelayLine::new),
            network_delay,
            ramp: RampBank::new(init.to_values()),
            pending: init.to_values(),
        }
    }

    pub fn set_params(&mut self, p: &BreathChainParams) {
        self.pending = p.to_values();
    }

    /// Control values in schema order: rt60_s, feedback, mix.
    pub fn set_targets(&mut self, values: &[f64]) {
        self.pending.copy_from_slice(&values[..3]);
    }

    /// Snap parameters without ramping (used before offline measurement).
    pub fn snap(&mut self, p: &BreathChainParams) {
        self.pending = p.to_values();
        self.ramp.snap(self.pending);
        self.update_combs(p.rt60_s);
    }

    fn update_combs(&mut self, rt60_s: f64) {
        let rt60 = rt60_s.clamp(0.2, 6.0);
        for c in &mut self.combs {
            c.g = comb_gain(c.delay as f64 / self.sample_rate, rt60);
        }
    }

    /// Process one mono input block into a stereo output.
    pub fn process(&mut self, input: &[f32], left: &mut [f32], right: &mut [f32]) {
        assert!(input.len() == left.len() && input.len() == right.len());
        self.ramp.set_target(self.pending, input.len());
        self.update_combs(self.ramp.current()[0]);
        let norm = 1.0 / 3f64.sqrt();
        for (i, &x) in input.iter().enumerate() {
            let [_, fb, mix] = self.ramp.tick();
            let fb = fb.clamp(0.0, MAX_FEEDBACK);
            let mix = mix.clamp(0.0, 1.0);
            let x = x as f64;

            let mut s = 0.0;
            for c in &mut self.combs {
                let y = c.line.tap(c.delay);
                c.line.push((1.0 - c.g) * x + c.g * y);
                s += y;
            }
            s *= 0.25;
            for a in &mut self.allpasses {
                let delayed = a.line.tap(a.delay);
                let w = s + ALLPASS_GAIN * delayed;
                a.line.push(w);
                s = delayed - ALLPASS_GAIN * w;
            }

            let r = [
                self.network[0].tap(self.network_delay[0]),
                self.network[1].tap(self.network_delay[1]),
                self.network[2].tap(self.network_delay[2]),
            ];
            // H r with H = I - (2/3) 1 1^T
            let m = (2.0 / 3.0) * (r[0] + r[1] + r[2]);
            let drive = (1.0 - fb) * norm * s;
            for k in 0..3 {
                self.network[k].push(drive + fb * (r[k] - m));
            }

            let wet_l = s + fb * (r[0] + 0.5 * r[2]);
            let wet_r = s + fb * (r[1] - 0.5 * r[2]);
            left[i] = ((1.0 - mix) * x + mix * wet_l) as f32;
            right[i] = ((1.0 - mix) * x + mix * wet_r) as f32;
        }
    }

    pub fn reset(&mut self) {
        for c in &mut self.combs {
            c.line.reset();
        }
        for a in &mut self.allpasses {
            a.line.reset();
        }
        for n in &mut self.network {
            n.reset();
        }
    }
}
