//! Small filter building blocks shared by the sound objects.

use std::f64::consts::PI;

/// Direct-form-I biquad with RBJ cookbook designs.
#[derive(Debug, Clone, Copy, Default)]
pub struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn from_coeffs(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
            ..Default::default()
        }
    }

    fn omega(fc: f64, sample_rate: f64) -> (f64, f64) {
        let w0 = 2.0 * PI * (fc / sample_rate).clamp(1e-6, 0.499);
        (w0.cos(), w0.sin())
    }

    pub fn lowpass(fc: f64, sample_rate: f64, q: f64) -> Self {
        let (c, s) = Self::omega(fc, sample_rate);
        let alpha = s / (2.0 * q);
        Self::from_coeffs(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    pub fn highpass(fc: f64, sample_rate: f64, q: f64) -> Self {
        let (c, s) = Self::omega(fc, sample_rate);
        let alpha = s / (2.0 * q);
        Self::from_coeffs(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            [1.0 + alpha, -2.0 * c, 1.0 - alpha],
        )
    }

    /// Band-pass with 0 dB gain at the centre frequency.
    pub fn bandpass(fc: f64, sample_rate: f64, q: f64) -> Self {
        let mut f = Self::default();
        f.set_bandpass(fc, sample_rate, q);
        f
    }

    /// Retune as a constant-peak-gain band-pass, keeping the filter state.
    pub fn set_bandpass(&mut self, fc: f64, sample_rate: f64, q: f64) {
        let (c, s) = Self::omega(fc, sample_rate);
        let alpha = s / (2.0 * q);
        let a0 = 1.0 + alpha;
        self.b0 = alpha / a0;
        self.b1 = 0.0;
        self.b2 = -alpha / a0;
        self.a1 = -2.0 * c / a0;
        self.a2 = (1.0 - alpha) / a0;
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 + self.b2 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }

    pub fn reset(&mut self) {
        self.x1 = 0.0;
        self.x2 = 0.0;
        self.y1 = 0.0;
        self.y2 = 0.0;
    }

    /// Largest magnitude held in the state registers.
    pub fn state_peak(&self) -> f64 {
        self.x1.abs().max(self.x2.abs()).max(self.y1.abs()).max(self.y2.abs())
    }
}

/// One-pole low-pass `y += a (x - y)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OnePole {
    pub y: f64,
}

impl OnePole {
    #[inline]
    pub fn process(&mut self, x: f64, coeff: f64) -> f64 {
        self.y += coeff * (x - self.y);
        self.y
    }

    /// Coefficient for a cutoff `fc` at `sample_rate`.
    pub fn coeff(fc: f64, sample_rate: f64) -> f64 {
        1.0 - (-2.0 * PI * fc / sample_rate).exp()
    }
}

/// Fixed-capacity circular delay line.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: Vec<f64>,
    write: usize,
}

impl DelayLine {
    /// A line able to delay up to `max_delay` samples.
    pub fn new(max_delay: usize) -> Self {
        Self {
            buf: vec![0.0; max_delay + 2],
            write: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        self.buf[self.write] = x;
        self.write += 1;
        if self.write == self.buf.len() {
            self.write = 0;
        }
    }

    /// Sample written `delay` pushes ago (`delay >= 1`).
    #[inline]
    pub fn tap(&self, delay: usize) -> f64 {
        let len = self.buf.len();
        let d = delay.clamp(1, len - 1);
        self.buf[(self.write + len - d) % len]
    }

    /// Linearly interpolated tap at a fractional delay (>= 1).
    #[inline]
    pub fn tap_frac(&self, delay: f64) -> f64 {
        let max = (self.buf.len() - 2) as f64;
        let d = delay.clamp(1.0, max);
        let i = d.floor();
        let frac = d - i;
        let a = self.tap(i as usize);
        let b = self.tap(i as usize + 1);
        a + (b - a) * frac
    }

    pub fn reset(&mut self) {
        self.buf.fill(0.0);
        self.write = 0;
    }

    pub fn peak(&self) -> f64 {
        self.buf.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steady_gain(f: &mut Biquad, freq: f64, sr: f64) -> f64 {
        let n = (sr as usize) / 2;
        let mut peak: f64 = 0.0;
        for i in 0..n {
            let y = f.process((2.0 * PI * freq * i as f64 / sr).sin());
            if i > n / 2 {
                peak = peak.max(y.abs());
            }
        }
        peak
    }

    #[test]
    fn bandpass_unity_at_centre() {
        let mut f = Biquad::bandpass(1000.0, 48_000.0, 30.0);
        assert!((steady_gain(&mut f, 1000.0, 48_000.0) - 1.0).abs() < 0.01);
        let mut f = Biquad::bandpass(1000.0, 48_000.0, 30.0);
        assert!(steady_gain(&mut f, 2000.0, 48_000.0) < 0.05);
    }

    #[test]
    fn lowpass_passes_dc() {
        let mut f = Biquad::lowpass(95.0, 200.0, std::f64::consts::FRAC_1_SQRT_2);
        let mut y = 0.0;
        for _ in 0..1000 {
            y = f.process(1.0);
        }
        assert!((y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn delay_line_taps() {
        let mut d = DelayLine::new(8);
        for i in 1..=5 {
            d.push(i as f64);
        }
        assert_eq!(d.tap(1), 5.0);
        assert_eq!(d.tap(3), 3.0);
        assert!((d.tap_frac(1.5) - 4.5).abs() < 1e-12);
    }
}
