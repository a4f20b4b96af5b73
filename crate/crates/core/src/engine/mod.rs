//! The block scheduler: features → mapping → sound objects → mixer →
//! breath chain → master, one block at a time.
//!
//! [`Engine`] is single-threaded and deterministic. Offline rendering drives
//! it from one loop; live sessions drive it from the audio thread and feed it
//! through wait-free queues.

mod config;
pub mod guard;
mod live;
mod render;

use crate::control::Command;
use crate::error::Result;
use crate::features::{CalibrationProfile, FeatureExtractor, FeatureVector, Level};
use crate::ingest::{BreathSource, Device, EmgFrame};
use crate::mapping::{DestValues, SceneSet, PARAM_COUNT};
use crate::mixer::{Meters, Mixer, MixerState};
use crate::synth::{
    derive_seed, params_of, BreathChain, Bubble, FluidFlow, Friction, Nonlinear, NonlinearParams, ObjectId,
    Scraping, SoundObject,
};

pub use config::{
    AudioConfig, CalibrationConfig, ControlConfig, EngineConfig, MidiConfig, Mode, OscConfig, MAX_EDGES,
};
pub use live::{run_live, LiveOptions, LiveReport, LiveSession, Output};
pub use render::{render_offline, RenderInputs, RenderReport, SceneChange};

/// An owned, interleaved audio block.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBlock {
    pub sample_rate: u32,
    pub channels: usize,
    pub samples: Vec<f32>,
}

impl AudioBlock {
    pub fn from_stereo(left: &[f32], right: &[f32], sample_rate: u32) -> Self {
        assert_eq!(left.len(), right.len());
        let samples = left.iter().zip(right).flat_map(|(&l, &r)| [l, r]).collect();
        Self {
            sample_rate,
            channels: 2,
            samples,
        }
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }
}

/// Engine state mirrored by the control plane. `Copy` so it can travel
/// through a wait-free queue without allocating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineState {
    pub mixer: MixerState,
    pub scene: u8,
    /// Edge weights of every scene, flattened in registry order.
    pub weights: [f64; MAX_EDGES],
    pub edge_count: u16,
}

/// Meters and feature levels for one telemetry tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeterFrame {
    pub block: u64,
    pub meters: Meters,
    pub levels: [Option<Level>; 2],
}

/// Messages from the audio context to the control plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Telemetry {
    State(EngineState),
    Meters(MeterFrame),
}

pub struct Engine {
    sample_rate: u32,
    block_size: usize,
    scenes: SceneSet,
    current: usize,
    features: FeatureExtractor,
    latest: [Option<FeatureVector>; 2],
    mapping_dirty: bool,
    dest: DestValues,
    values: [f64; PARAM_COUNT],
    xfade_from: [f64; PARAM_COUNT],
    xfade_pos: f64,
    xfade_step: f64,
    friction: Friction,
    bubble: Bubble,
    fluidflow: FluidFlow,
    scraping: Scraping,
    nonlinear: Nonlinear,
    chain: BreathChain,
    mixer: Mixer,
    breath: BreathSource,
    suspended: [bool; ObjectId::COUNT],
    /// Objects stay idle until the mapping first drives one of their params.
    awake: [bool; ObjectId::COUNT],
    buffers: [Vec<f32>; ObjectId::COUNT],
    left: Vec<f32>,
    right: Vec<f32>,
    send: Vec<f32>,
    wet_l: Vec<f32>,
    wet_r: Vec<f32>,
    meters: Meters,
    blocks: u64,
    faults: u64,
    feature_tap: Option<rtrb::Producer<FeatureVector>>,
    tap_dropped: u64,
}

impl Engine {
    /// Build an engine from a validated config. `seed` defaults to 0 when
    /// the config has none (live mode).
    pub fn new(cfg: &EngineConfig, profile: &CalibrationProfile) -> Result<Self> {
        let scenes = cfg.validate()?;
        let current = scenes.index(&cfg.initial_scene).expect("validated");
        let seed = cfg.seed.unwrap_or(0);
        let sr = cfg.sample_rate as f64;
        let n = cfg.block_size;
        let scene = &scenes.scenes[current];
        let nonlinear = Nonlinear::new(
            sr,
            &NonlinearParams {
                mod_ratios: scene.nonlinear_ratios,
                jitter_seed: derive_seed(seed, ObjectId::Nonlinear.as_str()),
                ..Default::default()
            },
        );
        let mut mixer = Mixer::new(sr, scene.mixer);
        let mut suspended = [false; ObjectId::COUNT];
        for o in ObjectId::ALL {
            if !scene.is_active(o) {
                mixer.set_active(o, false, 0.0);
                suspended[o.index()] = true;
            }
        }
        let mut engine = Self {
            sample_rate: cfg.sample_rate,
            block_size: n,
            features: FeatureExtractor::new(cfg.features, profile),
            latest: [None, None],
            mapping_dirty: true,
            dest: DestValues::default(),
            values: scene.base,
            xfade_from: scene.base,
            xfade_pos: 1.0,
            xfade_step: 1.0,
            friction: Friction::new(sr),
            bubble: Bubble::new(sr),
            fluidflow: FluidFlow::new(sr, derive_seed(seed, ObjectId::FluidFlow.as_str())),
            scraping: Scraping::new(sr, derive_seed(seed, ObjectId::Scraping.as_str())),
            nonlinear,
            chain: BreathChain::new(sr),
            mixer,
            breath: BreathSource::silent(cfg.sample_rate),
            suspended,
            awake: [false; ObjectId::COUNT],
            buffers: std::array::from_fn(|_| vec![0.0; n]),
            left: vec![0.0; n],
            right: vec![0.0; n],
            send: vec![0.0; n],
            wet_l: vec![0.0; n],
            wet_r: vec![0.0; n],
            meters: Meters::default(),
            blocks: 0,
            faults: 0,
            feature_tap: None,
            tap_dropped: 0,
            scenes,
            current,
        };
        engine.settle_chain();
        Ok(engine)
    }

    fn settle_chain(&mut self) {
        let r = params_of(ObjectId::Breath);
        self.chain.snap(&crate::synth::BreathChainParams::from_values(&self.values[r]));
    }

    /// Breath microphone signal, already at the engine rate.
    pub fn set_breath(&mut self, samples: Vec<f32>) {
        self.breath = BreathSource::new(samples, self.sample_rate);
    }

    /// Forward every feature vector to `tap` (live feature logging).
    pub fn set_feature_tap(&mut self, tap: rtrb::Producer<FeatureVector>) {
        self.feature_tap = Some(tap);
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn scenes(&self) -> &SceneSet {
        &self.scenes
    }

    pub fn current_scene(&self) -> &str {
        &self.scenes.scenes[self.current].name
    }

    pub fn scene_index(&self) -> usize {
        self.current
    }

    pub fn mixer_state(&self) -> &MixerState {
        self.mixer.state()
    }

    /// Current (block-end) parameter values in schema order.
    /// Current linear gain of a strip, scene fade included.
    pub fn strip_gain(&self, o: ObjectId) -> f64 {
        self.mixer.current_gain(o)
    }

    pub fn param_values(&self) -> &[f64; PARAM_COUNT] {
        &self.values
    }

    pub fn meters(&self) -> &Meters {
        &self.meters
    }

    pub fn latest_features(&self, d: Device) -> Option<&FeatureVector> {
        self.latest[d.index()].as_ref()
    }

    pub fn levels(&self) -> [Option<Level>; 2] {
        self.latest.map(|f| f.map(|f| f.level))
    }

    pub fn blocks(&self) -> u64 {
        self.blocks
    }

    /// Session time at the start of the next block.
    pub fn clock_us(&self) -> u64 {
        self.blocks * self.block_size as u64 * 1_000_000 / self.sample_rate as u64
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    /// Feature vectors lost because the tap queue was full.
    pub fn tap_dropped(&self) -> u64 {
        self.tap_dropped
    }

    pub fn is_suspended(&self, o: ObjectId) -> bool {
        self.suspended[o.index()]
    }

    pub fn is_crossfading(&self) -> bool {
        self.xfade_pos < 1.0
    }

    /// Feed one EMG frame to the feature stage; the mapping picks the result
    /// up at the next block boundary.
    pub fn push_frame(&mut self, frame: &EmgFrame) -> Option<FeatureVector> {
        let fv = self.features.push(frame)?;
        self.latest[frame.device.index()] = Some(fv);
        self.mapping_dirty = true;
        if let Some(tap) = &mut self.feature_tap {
            if tap.push(fv).is_err() {
                self.tap_dropped += 1;
            }
        }
        Some(fv)
    }

    /// Apply a resolved control command. Returns true if state changed.
    pub fn apply(&mut self, cmd: &Command) -> bool {
        match *cmd {
            Command::Scene(idx) => {
                let idx = idx as usize;
                if idx >= self.scenes.scenes.len() {
                    return false;
                }
                self.switch_scene(idx);
                true
            }
            Command::EdgeWeight { scene, edge, weight } => {
                let Some(e) = self
                    .scenes
                    .scenes
                    .get_mut(scene as usize)
                    .and_then(|s| s.matrix.edges.get_mut(edge as usize))
                else {
                    return false;
                };
                if e.weight == weight {
                    return false;
                }
                e.weight = weight;
                if scene as usize == self.current {
                    self.mapping_dirty = true;
                }
                true
            }
            _ => self.mixer.apply(cmd),
        }
    }

    /// Start a crossfade to scene `idx`. Switching to the current scene keeps
    /// every parameter where it is.
    pub fn switch_scene(&mut self, idx: usize) {
        let scene = &self.scenes.scenes[idx];
        let xf = scene.crossfade_s.max(0.0);
        let block_s = self.block_size as f64 / self.sample_rate as f64;
        self.xfade_from = self.values;
        if xf > 0.0 {
            self.xfade_pos = 0.0;
            self.xfade_step = block_s / xf;
        } else {
            self.xfade_pos = 1.0;
        }
        self.mixer.set_state(scene.mixer, xf);
        for o in ObjectId::ALL {
            let active = scene.is_active(o);
            self.mixer.set_active(o, active, xf);
            if active {
                self.suspended[o.index()] = false;
            }
        }
        self.nonlinear.set_ratios(scene.nonlinear_ratios);
        self.current = idx;
        self.mapping_dirty = true;
    }

    /// Snapshot for the control plane.
    pub fn state(&self) -> EngineState {
        let mut weights = [0.0; MAX_EDGES];
        let mut k = 0;
        for s in &self.scenes.scenes {
            for e in &s.matrix.edges {
                if k < MAX_EDGES {
                    weights[k] = e.weight;
                    k += 1;
                }
            }
        }
        EngineState {
            mixer: *self.mixer.state(),
            scene: self.current as u8,
            weights,
            edge_count: k as u16,
        }
    }

    pub fn meter_frame(&self) -> MeterFrame {
        MeterFrame {
            block: self.blocks,
            meters: self.meters,
            levels: self.levels(),
        }
    }

    fn update_values(&mut self) {
        if self.mapping_dirty {
            self.scenes.scenes[self.current]
                .matrix
                .evaluate(&self.latest, &mut self.dest);
            self.mapping_dirty = false;
        }
        if self.xfade_pos < 1.0 {
            self.xfade_pos = (self.xfade_pos + self.xfade_step).min(1.0);
        }
        let base = &self.scenes.scenes[self.current].base;
        for i in 0..PARAM_COUNT {
            let target = if self.dest.mapped[i] { self.dest.values[i] } else { base[i] };
            self.values[i] = if self.xfade_pos < 1.0 {
                self.xfade_from[i] + self.xfade_pos * (target - self.xfade_from[i])
            } else {
                target
            };
        }
    }

    fn object(&mut self, o: ObjectId) -> Option<&mut dyn SoundObject> {
        match o {
            ObjectId::Friction => Some(&mut self.friction),
            ObjectId::Bubble => Some(&mut self.bubble),
            ObjectId::FluidFlow => Some(&mut self.fluidflow),
            ObjectId::Scraping => Some(&mut self.scraping),
            ObjectId::Nonlinear => Some(&mut self.nonlinear),
            ObjectId::Breath => None,
        }
    }

    fn reset_all(&mut self) {
        for o in ObjectId::ALL {
            if let Some(obj) = self.object(o) {
                obj.reset();
            }
        }
        self.chain.reset();
        self.settle_chain();
    }

    /// Render the next stereo block. Performs no allocation.
    pub fn process_block(&mut self) -> (&[f32], &[f32]) {
        let _ctx = guard::AudioContext::enter();
        self.update_values();

        for o in ObjectId::ALL {
            let k = o.index();
            if o == ObjectId::Breath || self.suspended[k] {
                continue;
            }
            if !self.awake[k] {
                if !params_of(o).any(|i| self.dest.mapped[i]) {
                    self.buffers[k].fill(0.0);
                    continue;
                }
                self.awake[k] = true;
            }
            let mut buf = std::mem::take(&mut self.buffers[k]);
            let values = self.values;
            let obj = self.object(o).expect("sound object");
            obj.set_targets(&values[params_of(o)]);
            obj.process(&mut buf);
            let f = obj.take_faults();
            self.buffers[k] = buf;
            self.faults += f as u64;
        }
        // the breath recording keeps time even while its strip is suspended
        self.breath.fill(&mut self.buffers[ObjectId::Breath.index()]);

        let inputs: [Option<&[f32]>; ObjectId::COUNT] =
            std::array::from_fn(|k| (!self.suspended[k]).then(|| self.buffers[k].as_slice()));
        self.mixer
            .process_strips(inputs, &mut self.left, &mut self.right, &mut self.send, &mut self.meters);

        self.chain.set_targets(&self.values[params_of(ObjectId::Breath)]);
        self.chain.process(&self.send, &mut self.wet_l, &mut self.wet_r);
        for i in 0..self.block_size {
            self.left[i] += self.wet_l[i];
            self.right[i] += self.wet_r[i];
        }
        self.mixer
            .process_master(&mut self.left, &mut self.right, &mut self.meters);

        let finite = self.left.iter().chain(self.right.iter()).all(|s| s.is_finite());
        if !finite {
            self.left.fill(0.0);
            self.right.fill(0.0);
            self.meters = Meters::default();
            self.reset_all();
            self.faults += 1;
        }

        for o in ObjectId::ALL {
            let k = o.index();
            if !self.suspended[k] && !self.scenes.scenes[self.current].is_active(o) && self.mixer.is_silent(o) {
                self.suspended[k] = true;
                if let Some(obj) = self.object(o) {
                    obj.reset();
                }
            }
        }
        self.blocks += 1;
        (&self.left, &self.right)
    }

    /// Convenience wrapper returning an owned block (allocates).
    pub fn render_block(&mut self) -> AudioBlock {
        let sr = self.sample_rate;
        let (l, r) = self.process_block();
        AudioBlock::from_stereo(l, r, sr)
    }

    /// Inject a non-finite value into an object's next block (fault drills).
    #[doc(hidden)]
    pub fn poison_for_test(&mut self) {
        self.values[params_of(ObjectId::Nonlinear).start] = f64::NAN;
        self.dest.values[params_of(ObjectId::Nonlinear).start] = f64::NAN;
        self.dest.mapped[params_of(ObjectId::Nonlinear).start] = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{resolve, ControlEvent, ControlSource};
    use crate::ingest::{synth_emg, Profile};

    fn cfg(scene: &str) -> EngineConfig {
        EngineConfig {
            seed: Some(7),
            initial_scene: scene.into(),
            ..Default::default()
        }
    }

    #[test]
    fn idle_engine_is_silent() {
        for scene in ["breath", "standstill", "musicking"] {
            let mut e = Engine::new(&cfg(scene), &CalibrationProfile::default()).unwrap();
            for _ in 0..200 {
                let (l, r) = e.process_block();
                assert!(l.iter().chain(r).all(|&s| s == 0.0), "{scene}");
            }
            assert_eq!(e.faults(), 0);
        }
    }

    #[test]
    fn macro_input_makes_sound() {
        let frames = synth_emg(Profile::Macro, 3, 4.0).unwrap();
        let mut e = Engine::new(&cfg("musicking"), &CalibrationProfile::default()).unwrap();
        let mut it = frames.iter().peekable();
        let mut peak = 0.0f32;
        for _ in 0..(4.0 * 48_000.0 / 256.0) as usize {
            let now = e.clock_us();
            while let Some(f) = it.next_if(|f| f.timestamp_us <= now) {
                e.push_frame(f);
            }
            let (l, r) = e.process_block();
            peak = l.iter().chain(r).fold(peak, |m, s| m.max(s.abs()));
        }
        assert!(peak > 0.01, "{peak}");
        assert_eq!(e.faults(), 0);
    }

    #[test]
    fn switch_to_same_scene_is_seamless() {
        let mut e = Engine::new(&cfg("standstill"), &CalibrationProfile::default()).unwrap();
        for _ in 0..10 {
            e.process_block();
        }
        let before = *e.param_values();
        e.switch_scene(e.scene_index());
        e.process_block();
        assert_eq!(before, *e.param_values());
    }

    #[test]
    fn crossfade_moves_params_gradually() {
        let mut e = Engine::new(&cfg("breath"), &CalibrationProfile::default()).unwrap();
        e.process_block();
        let from = *e.param_values();
        let target_idx = e.scenes().index("musicking").unwrap();
        let target = e.scenes().scenes[target_idx].base;
        e.switch_scene(target_idx);
        let blocks = (2.0 * 48_000.0 / 256.0f64).ceil() as usize;
        let mut prev = from;
        for b in 0..blocks {
            e.process_block();
            let now = *e.param_values();
            for i in 0..PARAM_COUNT {
                let bound = (target[i] - from[i]).abs() * 256.0 / (2.0 * 48_000.0) + 1e-12;
                assert!((now[i] - prev[i]).abs() <= bound, "block {b} param {i}");
            }
            prev = now;
        }
        assert!(!e.is_crossfading());
        assert_eq!(*e.param_values(), target);
    }

    #[test]
    fn commands_change_state() {
        let mut e = Engine::new(&cfg("musicking"), &CalibrationProfile::default()).unwrap();
        let reg = e.scenes().registry();
        let ev = ControlEvent::number(ControlSource::Ws, "/mix/strip/friction/gain_db", -6.0);
        assert!(e.apply(&resolve(&ev, &reg).unwrap().command));
        assert_eq!(e.state().mixer.strip(ObjectId::Friction).gain_db, -6.0);
        let id = reg.edges[0].0.clone();
        let ev = ControlEvent::number(ControlSource::Ws, format!("/map/edge/{id}/weight"), 0.25);
        assert!(e.apply(&resolve(&ev, &reg).unwrap().command));
        assert_eq!(e.state().weights[0], 0.25);
        assert_eq!(e.state().edge_count as usize, reg.edges.len());
    }

    #[test]
    fn nan_guard_mutes_and_counts() {
        let frames = synth_emg(Profile::Macro, 3, 2.0).unwrap();
        let mut e = Engine::new(&cfg("musicking"), &CalibrationProfile::default()).unwrap();
        for f in &frames {
            e.push_frame(f);
        }
        for _ in 0..20 {
            e.process_block();
        }
        e.poison_for_test();
        let (l, r) = e.process_block();
        assert!(l.iter().chain(r).all(|s| s.is_finite()));
        assert!(e.faults() >= 1);
    }
}
