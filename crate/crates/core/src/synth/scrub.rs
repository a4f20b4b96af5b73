//! Scrubbing delay used for spatial smear on the fluid-flow stream.
//!
//! A single feed-forward tap whose delay swings between `250 ms - depth`
//! and 250 ms at 0.3 Hz. `amount` scales the swing depth (0..10 ms) and the
//! wet level (0..0.5). There is no feedback path.

use super::filters::DelayLine;
use super::Phasor;

pub const MAX_DELAY_MS: f64 = 250.0;
pub const MAX_DEPTH_MS: f64 = 10.0;
pub const LFO_HZ: f64 = 0.3;
pub const MAX_WET: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ScrubDelay {
    line: DelayLine,
    lfo: Phasor,
    sample_rate: f64,
    amount: f64,
}

impl ScrubDelay {
    pub fn new(sample_rate: f64) -> Self {
        let max = (MAX_DELAY_MS * 1e-3 * sample_rate).ceil() as usize + 2;
        Self {
            line: DelayLine::new(max),
            lfo: Phasor::default(),
            sample_rate,
            amount: 0.0,
        }
    }

    /// Process `buf` in place, ramping the amount from its previous value
    /// to `amount` across the block.
    pub fn process(&mut self, buf: &mut [f32], amount: f64) {
        let target = amount.clamp(0.0, 1.0);
        let step = if buf.is_empty() {
            0.0
        } else {
            (target - self.amount) / buf.len() as f64
        };
        let max_samples = MAX_DELAY_MS * 1e-3 * self.sample_rate;
        let depth_per_amount = MAX_DEPTH_MS * 1e-3 * self.sample_rate;
        let lfo_inc = LFO_HZ / self.sample_rate;
        for s in buf.iter_mut() {
            let x = *s as f64;
            self.line.push(x);
            let swing = 0.5 + 0.5 * self.lfo.sin(lfo_inc);
            let amt = self.amount;
            if amt > 0.0 {
                let delay = max_samples - amt * depth_per_amount * swing;
                *s = (x + MAX_WET * amt * self.line.tap_frac(delay)) as f32;
            }
            self.amount += step;
        }
        self.amount = target;
    }

    pub fn reset(&mut self) {
        self.line.reset();
        self.amount = 0.0;
    }

    pub fn peak(&self) -> f64 {
        self.line.peak()
    }
}
