//! Single bubbles: exponentially decaying sinusoids tuned by radius.
//!
//! Resonance follows the Minnaert approximation `f0 = 3 / r` Hz and the
//! damping `d = 0.13 / r` 1/s. The rising factor sweeps the frequency
//! upward as `f(t) = f0 (1 + rise * d * t * 0.1)`.

use super::{params_of, ObjectId, Phasor, RampBank, SoundObject, PARAMS};

pub const RADIUS_MIN: f64 = 5e-4;
pub const RADIUS_MAX: f64 = 2e-2;

/// Envelope level at which an event is considered finished (-60 dB).
const END_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleParams {
    pub radius_m: f64,
    pub rise: f64,
    pub amplitude: f64,
}

impl Default for BubbleParams {
    fn default() -> Self {
        Self {
            radius_m: 4e-3,
            rise: 0.2,
            amplitude: 0.5,
        }
    }
}

pub fn minnaert_hz(radius_m: f64) -> f64 {
    3.0 / radius_m
}

pub fn damping(radius_m: f64) -> f64 {
    0.13 / radius_m
}

/// One sounding bubble.
#[derive(Debug, Clone, Copy, Default)]
pub struct BubbleVoice {
    osc: Phasor,
    f0: f64,
    sweep: f64,
    amp: f64,
    env: f64,
    decay: f64,
    t: f64,
    dt: f64,
}

impl BubbleVoice {
    /// Start an event. Returns true when the radius had to be clamped.
    pub fn start(&mut self, p: &BubbleParams, sample_rate: f64) -> bool {
        let r = p.radius_m.clamp(RADIUS_MIN, RADIUS_MAX);
        let d = damping(r);
        *self = Self {
            osc: Phasor::default(),
            f0: minnaert_hz(r),
            sweep: p.rise.clamp(0.0, 1.0) * d * 0.1,
            amp: p.amplitude.clamp(0.0, 1.0),
            env: 1.0,
            decay: (-d / sample_rate).exp(),
            t: 0.0,
            dt: 1.0 / sample_rate,
        };
        r != p.radius_m
    }

    pub fn is_active(&self) -> bool {
        self.env >= END_LEVEL && self.amp > 0.0
    }

    /// Envelope level for the next sample.
    pub fn level(&self) -> f64 {
        self.amp * self.env
    }

    #[inline]
    pub fn next(&mut self) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        let f = self.f0 * (1.0 + self.sweep * self.t);
        let y = self.amp * self.env * self.osc.sin(f * self.dt);
        self.env *= self.decay;
        self.t += self.dt;
        y
    }

    pub fn stop(&mut self) {
        self.env = 0.0;
    }
}

/// A rendered bubble event.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleRender {
    pub samples: Vec<f32>,
    /// The requested radius was outside [0.5 mm, 20 mm] and was clamped.
    pub radius_clamped: bool,
}

/// Render one bubble until its envelope falls below -60 dB or `max_len`.
pub fn bubble_render(p: &BubbleParams, sample_rate: f64, max_len: usize) -> BubbleRender {
    let mut v = BubbleVoice::default();
    let radius_clamped = v.start(p, sample_rate);
    let mut samples = Vec::new();
    while v.is_active() && samples.len() < max_len {
        samples.push(v.next() as f32);
    }
    BubbleRender {
        samples,
        radius_clamped,
    }
}

const VOICES: usize = 4;
/// Per-voice ceiling keeps the sum of all voices under 4.
const VOICE_GAIN: f64 = 0.9;

/// Bubble sound object: a new event fires on each rising edge of `trigger`
/// through 0.5, using the parameters at that instant.
pub struct Bubble {
    sample_rate: f64,
    ramp: RampBank<4>,
    pending: [f64; 4],
    voices: [BubbleVoice; VOICES],
    next_voice: usize,
    armed: bool,
    events: u64,
}

impl Bubble {
    pub fn new(sample_rate: f64) -> Self {
        let mut init = [0.0; 4];
        for (v, s) in init.iter_mut().zip(&PARAMS[params_of(ObjectId::Bubble)]) {
            *v = s.default;
        }
        Self {
            sample_rate,
            ramp: RampBank::new(init),
            pending: init,
            voices: [BubbleVoice::default(); VOICES],
            next_voice: 0,
            armed: true,
            events: 0,
        }
    }

    /// Fire an event immediately.
    pub fn trigger(&mut self, p: &BubbleParams) {
        let mut scaled = *p;
        scaled.amplitude *= VOICE_GAIN;
        self.voices[self.next_voice].start(&scaled, self.sample_rate);
        self.next_voice = (self.next_voice + 1) % VOICES;
        self.events += 1;
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn active_voices(&self) -> usize {
        self.voices.iter().filter(|v| v.is_active()).count()
    }
}

impl SoundObject for Bubble {
    fn id(&self) -> ObjectId {
        ObjectId::Bubble
    }

    fn set_targets(&mut self, values: &[f64]) {
        self.pending.copy_from_slice(&values[..4]);
    }

    fn process(&mut self, out: &mut [f32]) {
        self.ramp.set_target(self.pending, out.len());
        for o in out.iter_mut() {
            let [radius_m, rise, amplitude, trigger] = self.ramp.tick();
            if self.armed && trigger >= 0.5 {
                self.trigger(&BubbleParams {
                    radius_m,
                    rise,
                    amplitude,
                });
                self.armed = false;
            } else if trigger < 0.5 {
                self.armed = true;
            }
            let y: f64 = self.voices.iter_mut().map(BubbleVoice::next).sum();
            *o = y as f32;
        }
    }

    fn reset(&mut self) {
        for v in &mut self.voices {
            v.stop();
        }
        self.armed = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_is_silent() {
        let r = bubble_render(
            &BubbleParams {
                amplitude: 0.0,
                ..Default::default()
            },
            48_000.0,
            1000,
        );
        assert!(r.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn event_ends_at_minus_60_db() {
        let p = BubbleParams {
            radius_m: 0.003,
            rise: 0.0,
            amplitude: 1.0,
        };
        let r = bubble_render(&p, 48_000.0, usize::MAX);
        let expected = (1000f64.ln() / damping(0.003) * 48_000.0).ceil() as usize;
        assert!((r.samples.len() as i64 - expected as i64).abs() <= 1, "{}", r.samples.len());
    }

    #[test]
    fn out_of_range_radius_is_clamped_and_flagged() {
        let p = BubbleParams {
            radius_m: 0.5,
            ..Default::default()
        };
        assert!(bubble_render(&p, 48_000.0, 10).radius_clamped);
        assert!(!bubble_render(&BubbleParams::default(), 48_000.0, 10).radius_clamped);
    }

    #[test]
    fn max_len_caps_event() {
        let r = bubble_render(&BubbleParams::default(), 48_000.0, 100);
        assert_eq!(r.samples.len(), 100);
    }

    #[test]
    fn trigger_edges_fire_once() {
        let mut b = Bubble::new(48_000.0);
        let mut vals = [0.004, 0.0, 1.0, 1.0];
        b.set_targets(&vals);
        let mut out = [0.0f32; 256];
        b.process(&mut out);
        b.process(&mut out);
        assert_eq!(b.events(), 1);
        vals[3] = 0.0;
        b.set_targets(&vals);
        b.process(&mut out);
        vals[3] = 1.0;
        b.set_targets(&vals);
        b.process(&mut out);
        assert_eq!(b.events(), 2);
    }
}
