//! Per-sample EMG kernels: rectification, envelope smoothing, windowed MAV
//! and the auxiliary time-domain features.

use crate::ingest::{EmgFrame, CHANNELS, EMG_RATE_HZ};

pub type Channels = [f64; CHANNELS];

/// Full-wave rectification.
pub fn rectify(frame: &EmgFrame) -> Channels {
    frame.channels.map(|c| (c as f64).abs())
}

/// One-pole coefficient `1 - exp(-1 / (tau * 200))`.
pub fn smoothing_alpha(tau_s: f64) -> f64 {
    1.0 - (-1.0 / (tau_s * EMG_RATE_HZ)).exp()
}

/// Per-channel one-pole envelope follower.
#[derive(Debug, Clone, Copy)]
pub struct Smoother {
    pub y: Channels,
    alpha: f64,
}

impl Smoother {
    pub fn new(tau_s: f64) -> Self {
        Self {
            y: [0.0; CHANNELS],
            alpha: smoothing_alpha(tau_s),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn smooth(&mut self, x: &Channels) -> Channels {
        for (y, x) in self.y.iter_mut().zip(x) {
            *y += self.alpha * (x - *y);
        }
        self.y
    }
}

/// MAV of a window of rectified samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mav {
    pub values: Channels,
    /// The window held fewer samples than the configured length.
    pub warm_up: bool,
}

/// Direct per-channel mean over `window`; `warm_up` is set when the window
/// is shorter than `nominal_len`.
pub fn mav(window: &[Channels], nominal_len: usize) -> Mav {
    let mut values = [0.0; CHANNELS];
    if !window.is_empty() {
        for x in window {
            for (v, x) in values.iter_mut().zip(x) {
                *v += x;
            }
        }
        let n = window.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
    }
    Mav {
        values,
        warm_up: window.len() < nominal_len,
    }
}

/// Sliding-window MAV with running sums, emitting every `hop` samples once
/// the window is full. Sums are recomputed from the buffer once per window
/// length so rounding error cannot accumulate.
#[derive(Debug, Clone)]
pub struct MavWindow {
    buf: Vec<Channels>,
    sum: Channels,
    len: usize,
    hop: usize,
    head: usize,
    filled: usize,
    pushed: u64,
}

impl MavWindow {
    pub fn new(len: usize, hop: usize) -> Self {
        assert!(len > 0 && hop > 0);
        Self {
            buf: vec![[0.0; CHANNELS]; len],
            sum: [0.0; CHANNELS],
            len,
            hop,
            head: 0,
            filled: 0,
            pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    /// Add one rectified sample; returns the window MAV on emission hops.
    pub fn push(&mut self, x: &Channels) -> Option<Channels> {
        let old = self.buf[self.head];
        self.buf[self.head] = *x;
        self.head = (self.head + 1) % self.len;
        if self.filled == self.len {
            for i in 0..CHANNELS {
                self.sum[i] += x[i] - old[i];
            }
        } else {
            self.filled += 1;
            for i in 0..CHANNELS {
                self.sum[i] += x[i];
            }
        }
        self.pushed += 1;
        if self.pushed % self.len as u64 == 0 {
            self.resync();
        }
        if self.filled < self.len || (self.pushed - self.len as u64) % self.hop as u64 != 0 {
            return None;
        }
        let n = self.len as f64;
        Some(self.sum.map(|s| s / n))
    }

    /// MAV over whatever the window currently holds.
    pub fn current(&self) -> Mav {
        let n = self.filled.max(1) as f64;
        Mav {
            values: self.sum.map(|s| s / n),
            warm_up: self.filled < self.len,
        }
    }

    fn resync(&mut self) {
        let mut sum = [0.0; CHANNELS];
        for x in &self.buf[..self.filled] {
            for i in 0..CHANNELS {
                sum[i] += x[i];
            }
        }
        self.sum = sum;
    }

    pub fn reset(&mut self) {
        self.sum = [0.0; CHANNELS];
        self.head = 0;
        self.filled = 0;
        self.pushed = 0;
    }
}

/// Root mean square of raw (signed) samples per channel.
pub fn rms(window: &[Channels]) -> Channels {
    let mut out = [0.0; CHANNELS];
    if window.is_empty() {
        return out;
    }
    for x in window {
        for i in 0..CHANNELS {
            out[i] += x[i] * x[i];
        }
    }
    out.map(|s| (s / window.len() as f64).sqrt())
}

/// Sum of absolute first differences per channel.
pub fn waveform_length(window: &[Channels]) -> Channels {
    let mut out = [0.0; CHANNELS];
    for w in window.windows(2) {
        for i in 0..CHANNELS {
            out[i] += (w[1][i] - w[0][i]).abs();
        }
    }
    out
}

/// Sign changes whose step exceeds `threshold`, per channel.
pub fn zero_crossings(window: &[Channels], threshold: f64) -> [u32; CHANNELS] {
    let mut out = [0; CHANNELS];
    for w in window.windows(2) {
        for i in 0..CHANNELS {
            let (a, b) = (w[0][i], w[1][i]);
            if a * b < 0.0 && (a - b).abs() >= threshold {
                out[i] += 1;
            }
        }
    }
    out
}
