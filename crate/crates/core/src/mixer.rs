//! The shared virtual mixer: one strip per sound object plus the breath
//! microphone, equal-power panning, a mono send bus into the breath chain,
//! and peak/RMS metering.
//!
//! Sends are tapped post-gain and pre-pan. Every change to a strip or the
//! master is applied as a linear ramp of the linear gain (10 ms for control
//! moves, the scene crossfade for scene changes).

use serde::{Deserialize, Serialize};

use crate::control::{resolve, Command, ControlEvent, Registry};
use crate::error::{Error, Result};
use crate::synth::ObjectId;

pub const GAIN_MIN_DB: f64 = -60.0;
pub const GAIN_MAX_DB: f64 = 6.0;
/// Control moves are smoothed over this time.
pub const CONTROL_RAMP_S: f64 = 0.010;
pub const STRIPS: usize = ObjectId::COUNT;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    20.0 * lin.log10()
}

/// Equal-power pan law: `gL = cos((p + 1) pi / 4)`, `gR = sin((p + 1) pi / 4)`.
pub fn pan_gains(pan: f64) -> (f64, f64) {
    let theta = (pan.clamp(-1.0, 1.0) + 1.0) * std::f64::consts::FRAC_PI_4;
    (theta.cos(), theta.sin())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripState {
    pub gain_db: f64,
    pub pan: f64,
    pub send_breath: f64,
    pub mute: bool,
}

impl Default for StripState {
    fn default() -> Self {
        Self {
            gain_db: 0.0,
            pan: 0.0,
            send_breath: 0.0,
            mute: false,
        }
    }
}

impl StripState {
    /// Linear gain, exactly zero when muted.
    pub fn linear_gain(&self) -> f64 {
        if self.mute {
            0.0
        } else {
            db_to_lin(self.gain_db.clamp(GAIN_MIN_DB, GAIN_MAX_DB))
        }
    }

    fn clamped(mut self) -> Self {
        self.gain_db = self.gain_db.clamp(GAIN_MIN_DB, GAIN_MAX_DB);
        self.pan = self.pan.clamp(-1.0, 1.0);
        self.send_breath = self.send_breath.clamp(0.0, 1.0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixerState {
    pub strips: [StripState; STRIPS],
    pub master_gain_db: f64,
}

impl Default for MixerState {
    fn default() -> Self {
        Self {
            strips: [StripState::default(); STRIPS],
            master_gain_db: 0.0,
        }
    }
}

impl MixerState {
    pub fn strip(&self, o: ObjectId) -> &StripState {
        &self.strips[o.index()]
    }

    pub fn strip_mut(&mut self, o: ObjectId) -> &mut StripState {
        &mut self.strips[o.index()]
    }

    /// Clamp every field into its range.
    pub fn clamped(mut self) -> Self {
        for s in &mut self.strips {
            *s = s.clamped();
        }
        self.master_gain_db = self.master_gain_db.clamp(GAIN_MIN_DB, GAIN_MAX_DB);
        self
    }

    /// Apply a mixer command; returns false for commands outside the mixer.
    pub fn apply(&mut self, cmd: &Command) -> bool {
        match *cmd {
            Command::StripGain(o, v) => self.strip_mut(o).gain_db = v.clamp(GAIN_MIN_DB, GAIN_MAX_DB),
            Command::StripPan(o, v) => self.strip_mut(o).pan = v.clamp(-1.0, 1.0),
            Command::StripSend(o, v) => self.strip_mut(o).send_breath = v.clamp(0.0, 1.0),
            Command::StripMute(o, m) => self.strip_mut(o).mute = m,
            Command::MasterGain(v) => self.master_gain_db = v.clamp(GAIN_MIN_DB, GAIN_MAX_DB),
            Command::Scene(_) | Command::EdgeWeight { .. } => return false,
        }
        true
    }
}

/// Set the addressed mixer field. Out-of-range values are clamped with a
/// warning; addresses outside `/mix/` are errors.
pub fn apply_control(state: &MixerState, ev: &ControlEvent) -> Result<MixerState> {
    let resolved = resolve(ev, &Registry::default())?;
    let mut next = *state;
    if next.apply(&resolved.command) {
        Ok(next)
    } else {
        Err(Error::Control(format!("'{}' is not a mixer address", ev.address)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Meter {
    pub peak: f64,
    pub rms: f64,
}

impl Meter {
    pub fn measure(x: &[f32]) -> Self {
        if x.is_empty() {
            return Self::default();
        }
        let mut peak = 0.0f64;
        let mut sq = 0.0f64;
        for &s in x {
            let s = s as f64;
            peak = peak.max(s.abs());
            sq += s * s;
        }
        Self {
            peak,
            rms: (sq / x.len() as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Meters {
    pub strips: [Meter; STRIPS],
    pub master: [Meter; 2],
}

/// Stateless mix of one block with fixed gains (no ramps). The reference
/// for the ramped [`Mixer`] and the mixing laws.
pub fn mix_block(
    inputs: &[&[f32]],
    state: &MixerState,
    left: &mut [f32],
    right: &mut [f32],
    send: &mut [f32],
    meters: &mut Meters,
) {
    let n = left.len();
    assert!(right.len() == n && send.len() == n, "mixer block length mismatch");
    left.fill(0.0);
    right.fill(0.0);
    send.fill(0.0);
    let mut lacc = vec![0.0f64; n];
    let mut racc = vec![0.0f64; n];
    for (k, x) in inputs.iter().enumerate() {
        assert_eq!(x.len(), n, "mixer block length mismatch");
        let s = &state.strips[k];
        let g = s.linear_gain();
        let (gl, gr) = pan_gains(s.pan);
        let mut peak = 0.0f64;
        let mut sq = 0.0;
        for i in 0..n {
            let y = x[i] as f64 * g;
            peak = peak.max((y as f32).abs() as f64);
            sq += (y as f32 as f64).powi(2);
            lacc[i] += gl * y;
            racc[i] += gr * y;
            send[i] += (s.send_breath * y) as f32;
        }
        meters.strips[k] = Meter {
            peak,
            rms: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 },
        };
    }
    let m = db_to_lin(state.master_gain_db.clamp(GAIN_MIN_DB, GAIN_MAX_DB));
    for i in 0..n {
        left[i] = (lacc[i] * m) as f32;
        right[i] = (racc[i] * m) as f32;
    }
    meters.master = [Meter::measure(left), Meter::measure(right)];
}

/// Linear ramp of one scalar.
#[derive(Debug, Clone, Copy, Default)]
struct Ramp {
    value: f64,
    target: f64,
    step: f64,
    remaining: usize,
}

impl Ramp {
    fn new(v: f64) -> Self {
        Self {
            value: v,
            target: v,
            ..Default::default()
        }
    }

    fn set(&mut self, target: f64, len: usize) {
        if target == self.target && (self.remaining > 0 || self.value == target) {
            return;
        }
        self.target = target;
        if len == 0 {
            self.value = target;
            self.remaining = 0;
        } else {
            self.step = (target - self.value) / len as f64;
            self.remaining = len;
        }
    }

    #[inline]
    fn tick(&mut self) -> f64 {
        let v = self.value;
        if self.remaining > 0 {
            self.remaining -= 1;
            self.value = if self.remaining == 0 { self.target } else { self.value + self.step };
        }
        v
    }

    fn settled(&self) -> bool {
        self.remaining == 0
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct StripRamps {
    gain: Ramp,
    pan: Ramp,
    send: Ramp,
}

/// The block-processing mixer with per-sample ramps.
#[derive(Debug, Clone)]
pub struct Mixer {
    sample_rate: f64,
    state: MixerState,
    /// Extra per-strip gain used to fade objects in and out on scene changes.
    scene_gain: [Ramp; STRIPS],
    strips: [StripRamps; STRIPS],
    master: Ramp,
}

impl Mixer {
    pub fn new(sample_rate: f64, state: MixerState) -> Self {
        let state = state.clamped();
        let strips = std::array::from_fn(|k| {
            let s = &state.strips[k];
            StripRamps {
                gain: Ramp::new(s.linear_gain()),
                pan: Ramp::new(s.pan),
                send: Ramp::new(s.send_breath),
            }
        });
        Self {
            sample_rate,
            state,
            scene_gain: [Ramp::new(1.0); STRIPS],
            strips,
            master: Ramp::new(db_to_lin(state.master_gain_db)),
        }
    }

    pub fn state(&self) -> &MixerState {
        &self.state
    }

    fn samples(&self, seconds: f64) -> usize {
        (seconds * self.sample_rate).round().max(0.0) as usize
    }

    /// Move to `state`, ramping over `ramp_s` seconds.
    pub fn set_state(&mut self, state: MixerState, ramp_s: f64) {
        let len = self.samples(ramp_s);
        self.state = state.clamped();
        for k in 0..STRIPS {
            let s = self.state.strips[k];
            self.strips[k].gain.set(s.linear_gain(), len);
            self.strips[k].pan.set(s.pan, len);
            self.strips[k].send.set(s.send_breath, len);
        }
        self.master.set(db_to_lin(self.state.master_gain_db), len);
    }

    /// Apply a control command with the 10 ms control ramp.
    pub fn apply(&mut self, cmd: &Command) -> bool {
        let mut next = self.state;
        if !next.apply(cmd) {
            return false;
        }
        self.set_state(next, CONTROL_RAMP_S);
        true
    }

    /// Fade a strip's scene gain to 1 (active) or 0 (inactive).
    pub fn set_active(&mut self, o: ObjectId, active: bool, ramp_s: f64) {
        let len = self.samples(ramp_s);
        self.scene_gain[o.index()].set(if active { 1.0 } else { 0.0 }, len);
    }

    /// True once an inactive strip has fully faded out.
    pub fn is_silent(&self, o: ObjectId) -> bool {
        let g = &self.scene_gain[o.index()];
        g.settled() && g.value == 0.0
    }

    pub fn scene_gain(&self, o: ObjectId) -> f64 {
        self.scene_gain[o.index()].value
    }

    /// Sum the strips into `left`/`right` and the send bus. Inputs whose
    /// slot is `None` are treated as silence (suspended objects).
    pub fn process_strips(
        &mut self,
        inputs: [Option<&[f32]>; STRIPS],
        left: &mut [f32],
        right: &mut [f32],
        send: &mut [f32],
        meters: &mut Meters,
    ) {
        let n = left.len();
        assert!(right.len() == n && send.len() == n, "mixer block length mismatch");
        left.fill(0.0);
        right.fill(0.0);
        send.fill(0.0);
        for k in 0..STRIPS {
            let r = &mut self.strips[k];
            let sg = &mut self.scene_gain[k];
            let Some(x) = inputs[k] else {
                // keep ramps moving so timing is independent of suspension
                for _ in 0..n {
                    r.gain.tick();
                    r.pan.tick();
                    r.send.tick();
                    sg.tick();
                }
                meters.strips[k] = Meter::default();
                continue;
            };
            assert_eq!(x.len(), n, "mixer block length mismatch");
            let mut peak = 0.0f64;
            let mut sq = 0.0f64;
            let mut pan_cache = (f64::NAN, 0.0, 0.0);
            for i in 0..n {
                let g = r.gain.tick() * sg.tick();
                let pan = r.pan.tick();
                let send_amt = r.send.tick();
                if pan != pan_cache.0 {
                    let (gl, gr) = pan_gains(pan);
                    pan_cache = (pan, gl, gr);
                }
                let y = (x[i] as f64 * g) as f32;
                let yf = y as f64;
                peak = peak.max(yf.abs());
                sq += yf * yf;
                left[i] += (pan_cache.1 * yf) as f32;
                right[i] += (pan_cache.2 * yf) as f32;
                send[i] += (send_amt * yf) as f32;
            }
            meters.strips[k] = Meter {
                peak,
                rms: if n > 0 { (sq / n as f64).sqrt() } else { 0.0 },
            };
        }
    }

    /// Apply the master gain in place and meter the result.
    pub fn process_master(&mut self, left: &mut [f32], right: &mut [f32], meters: &mut Meters) {
        for (l, r) in left.iter_mut().zip(right.iter_mut()) {
            let g = self.master.tick();
            *l = (*l as f64 * g) as f32;
            *r = (*r as f64 * g) as f32;
        }
        meters.master = [Meter::measure(left), Meter::measure(right)];
    }

    /// Current per-sample linear gain of a strip (including scene fade).
    pub fn current_gain(&self, o: ObjectId) -> f64 {
        self.strips[o.index()].gain.value * self.scene_gain[o.index()].value
    }
}
