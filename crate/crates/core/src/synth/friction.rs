//! Bowed/rubbed friction: a LuGre bristle interactor driving a modal body.
//!
//! The exciter slides at `v = 0.05 * velocity` m/s against a five-mode
//! resonator. Bristle deflection `z` follows
//! `dz/dt = v_rel - |v_rel| z / z_ss(v_rel)` with
//! `z_ss = (Fc + (Fs - Fc) exp(-(v_rel/vs)^2)) / sigma0`, and the contact
//! force `F = sigma0 z + sigma1 dz/dt + sigma2 v_rel` acts on the modes.
//! Normal load scales with `pressure * force`, `sigma0` with stiffness and
//! `sigma1` with dissipation. The body velocity is soft-saturated and sent
//! through a Q = 30 band-pass at `bandpass_fc`.

use super::filters::Biquad;
use super::{params_of, ObjectId, RampBank, SoundObject, PARAMS, SILENCE};

pub const BANDPASS_Q: f64 = 30.0;

const MODE_HZ: [f64; 5] = [187.0, 431.0, 863.0, 1427.0, 2219.0];
const MODE_T60_S: [f64; 5] = [0.8, 0.6, 0.45, 0.3, 0.2];
const MODE_MASS: [f64; 5] = [0.05, 0.06, 0.08, 0.1, 0.12];

const MAX_NORMAL: f64 = 8.0;
const MU_COULOMB: f64 = 0.3;
const MU_STATIC: f64 = 0.5;
const STRIBECK_V: f64 = 0.05;
const OUTPUT_GAIN: f64 = 6.0;
/// Modal displacement beyond this is treated as a numerical fault.
const STATE_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionParams {
    pub force: f64,
    pub pressure: f64,
    pub stiffness: f64,
    pub dissipation: f64,
    pub velocity: f64,
    pub bandpass_fc: f64,
}

impl FrictionParams {
    pub fn from_values(v: &[f64]) -> Self {
        Self {
            force: v[0],
            pressure: v[1],
            stiffness: v[2],
            dissipation: v[3],
            velocity: v[4],
            bandpass_fc: v[5],
        }
    }

    pub fn to_values(&self) -> [f64; 6] {
        [
            self.force,
            self.pressure,
            self.stiffness,
            self.dissipation,
            self.velocity,
            self.bandpass_fc,
        ]
    }

    pub fn silent() -> Self {
        Self::from_values(&[0.0; 6])
    }
}

impl Default for FrictionParams {
    fn default() -> Self {
        let mut v = [0.0; 6];
        for (x, s) in v.iter_mut().zip(&PARAMS[params_of(ObjectId::Friction)]) {
            *x = s.default;
        }
        Self::from_values(&v)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Mode {
    x: f64,
    v: f64,
    k: f64,
    c: f64,
    inv_m: f64,
}

pub struct Friction {
    sample_rate: f64,
    ramp: RampBank<6>,
    pending: [f64; 6],
    modes: [Mode; 5],
    z: f64,
    bandpass: Biquad,
    faults: u32,
}

impl Friction {
    pub fn new(sample_rate: f64) -> Self {
        let init = FrictionParams::default().to_values();
        let modes = std::array::from_fn(|i| {
            let w = std::f64::consts::TAU * MODE_HZ[i];
            Mode {
                x: 0.0,
                v: 0.0,
                k: w * w,
                c: 2.0 * 1000f64.ln() / MODE_T60_S[i],
                inv_m: 1.0 / MODE_MASS[i],
            }
        });
        Self {
            sample_rate,
            ramp: RampBank::new(init),
            pending: init,
            modes,
            z: 0.0,
            bandpass: Biquad::bandpass(init[5], sample_rate, BANDPASS_Q),
            faults: 0,
        }
    }

    pub fn set_params(&mut self, p: &FrictionParams) {
        self.pending = p.to_values();
    }

    fn clear_state(&mut self) {
        for m in &mut self.modes {
            m.x = 0.0;
            m.v = 0.0;
        }
        self.z = 0.0;
        self.bandpass.reset();
    }

    #[inline]
    fn step(&mut self, p: &FrictionParams, dt: f64) -> f64 {
        let load = MAX_NORMAL * p.force.clamp(0.0, 1.0) * p.pressure.clamp(0.0, 1.0);
        let v_ex = 0.05 * p.velocity.clamp(-1.0, 1.0);
        let v_body: f64 = self.modes.iter().map(|m| m.v).sum();
        let v_rel = v_ex - v_body;

        let force = if load > 0.0 {
            let sigma0 = 2.0e3 + 2.0e5 * p.stiffness.clamp(0.0, 1.0);
            let sigma1 = 0.2 * p.dissipation.clamp(0.0, 1.0) * sigma0.sqrt();
            let sigma2 = 0.4 * load;
            let g = load * (MU_COULOMB + (MU_STATIC - MU_COULOMB) * (-(v_rel / STRIBECK_V).powi(2)).exp());
            let z_ss = g / sigma0;
            // Implicit in z: unconditionally stable for any |v_rel|.
            let z_new = (self.z + dt * v_rel) / (1.0 + dt * v_rel.abs() / z_ss);
            let z_dot = (z_new - self.z) / dt;
            self.z = z_new;
            sigma0 * z_new + sigma1 * z_dot + sigma2 * v_rel
        } else {
            self.z = 0.0;
            0.0
        };

        let mut out = 0.0;
        for m in &mut self.modes {
            let a = force * m.inv_m - m.k * m.x - m.c * m.v;
            m.v += dt * a;
            m.x += dt * m.v;
            out += m.v;
        }
        out
    }
}

impl SoundObject for Friction {
    fn id(&self) -> ObjectId {
        ObjectId::Friction
    }

    fn set_targets(&mut self, values: &[f64]) {
        self.pending.copy_from_slice(&values[..6]);
    }

    fn process(&mut self, out: &mut [f32]) {
        self.ramp.set_target(self.pending, out.len());
        let dt = 1.0 / self.sample_rate;
        let mut last = FrictionParams::silent();
        for o in out.iter_mut() {
            let p = FrictionParams::from_values(&self.ramp.tick());
            let body = self.step(&p, dt);
            self.bandpass
                .set_bandpass(p.bandpass_fc.clamp(80.0, 2500.0), self.sample_rate, BANDPASS_Q);
            let y = self.bandpass.process((OUTPUT_GAIN * body).tanh());
            *o = y as f32;
            last = p;
        }

        let broken = !self.z.is_finite()
            || self
                .modes
                .iter()
                .any(|m| !(m.x.abs() < STATE_LIMIT) || !m.v.is_finite())
            || !self.bandpass.state_peak().is_finite();
        if broken {
            self.clear_state();
            out.fill(0.0);
            self.faults += 1;
            return;
        }
        // Flush decayed motion to exact zero once nothing drives the body.
        let unloaded = last.force <= 0.0 || last.pressure <= 0.0;
        let still = |m: &Mode| {
            let amp = if unloaded { (m.v * m.v + m.k * m.x * m.x).sqrt() } else { m.v.abs() };
            amp < SILENCE * 1e-3
        };
        if (unloaded || last.velocity == 0.0)
            && self.modes.iter().all(still)
            && self.bandpass.state_peak() < SILENCE
        {
            for m in &mut self.modes {
                m.v = 0.0;
                // with no normal load nothing holds the body displaced
                if unloaded {
                    m.x = 0.0;
                }
            }
            self.bandpass.reset();
        }
    }

    fn reset(&mut self) {
        self.clear_state();
    }

    fn take_faults(&mut self) -> u32 {
        std::mem::take(&mut self.faults)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn render(f: &mut Friction, seconds: f64) -> Vec<f32> {
        let mut all = Vec::new();
        let mut buf = [0.0f32; 256];
        for _ in 0..(seconds * 48_000.0 / 256.0) as usize {
            f.process(&mut buf);
            all.extend_from_slice(&buf);
        }
        all
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|&s| (s as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn sliding() -> FrictionParams {
        FrictionParams {
            force: 0.8,
            pressure: 0.7,
            stiffness: 0.5,
            dissipation: 0.2,
            velocity: 0.6,
            bandpass_fc: 431.0,
        }
    }

    #[test]
    fn all_zero_params_are_silent() {
        let mut f = Friction::new(48_000.0);
        f.set_params(&FrictionParams::silent());
        assert!(render(&mut f, 1.0).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn sliding_makes_sound() {
        let mut f = Friction::new(48_000.0);
        f.set_params(&sliding());
        let y = render(&mut f, 2.0);
        let level = rms(&y[48_000..]);
        assert!(level > 1e-3, "rms {level}");
        assert!(y.iter().all(|s| s.is_finite() && s.abs() < 4.0));
    }

    #[test]
    fn stopping_decays_below_minus_80_db() {
        let mut f = Friction::new(48_000.0);
        f.set_params(&sliding());
        let y = render(&mut f, 1.0);
        let before = rms(&y[24_000..]);
        let mut stopped = sliding();
        stopped.velocity = 0.0;
        f.set_params(&stopped);
        let tail = render(&mut f, 2.0);
        let after = rms(&tail[tail.len() - 4_800..]);
        assert!(after <= before * 1e-4, "before {before} after {after}");
    }
}
