//! The engine configuration file.
//!
//! ```toml
//! sample_rate = 48000
//! block_size = 256
//! seed = 7
//! mode = "offline"          # or "live"
//! initial_scene = "breath"
//! breath = "breath.wav"     # optional breath recording
//! tail_s = 1.0              # offline: render past the last input
//!
//! [calibration]
//! path = "profile.toml"
//!
//! [osc]
//! bind = "0.0.0.0"
//! port = 9129
//!
//! [control]
//! bind = "127.0.0.1"
//! port = 9130
//!
//! [midi]
//! device = "/dev/snd/midiC1D0"
//! [[midi.cc]]
//! channel = 1
//! cc = 7
//! address = "/mix/master/gain_db"
//! min = -60.0
//! max = 6.0
//!
//! [audio]
//! output = "null"           # "null", "stdout" or a .wav path (live mode)
//!
//! [features]
//! tau_s = 0.1
//!
//! [[scene]]                 # see mapping::SceneConfig
//! [[cue]]
//! at_s = 30.0
//! scene = "musicking"
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::{resolve, CcMapping, ControlEvent, ControlSource, DEFAULT_WS_PORT};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::ingest::osc::DEFAULT_PORT as DEFAULT_OSC_PORT;
use crate::mapping::{Cue, SceneConfig, SceneSet};

/// Upper bound on routing edges across all scenes (fixed-size telemetry).
pub const MAX_EDGES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    #[default]
    Offline,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OscConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for OscConfig {
    fn default() -> Self {
        Self {
            bind: "0.0.0.0".into(),
            port: DEFAULT_OSC_PORT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    pub enabled: bool,
    pub bind: String,
    pub port: u16,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            bind: "127.0.0.1".into(),
            port: DEFAULT_WS_PORT,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidiConfig {
    /// Raw MIDI byte source (device node or FIFO).
    pub device: Option<PathBuf>,
    pub cc: Vec<CcMapping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub output: String,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self { output: "null".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub sample_rate: u32,
    pub block_size: usize,
    pub seed: Option<u64>,
    pub mode: Mode,
    pub initial_scene: String,
    pub breath: Option<PathBuf>,
    pub tail_s: f64,
    pub calibration: CalibrationConfig,
    pub osc: OscConfig,
    pub control: ControlConfig,
    pub midi: MidiConfig,
    pub audio: AudioConfig,
    pub features: FeatureConfig,
    #[serde(rename = "scene")]
    pub scenes: Vec<SceneConfig>,
    #[serde(rename = "cue")]
    pub cues: Vec<Cue>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            block_size: 256,
            seed: None,
            mode: Mode::Offline,
            initial_scene: "breath".into(),
            breath: None,
            tail_s: 1.0,
            calibration: CalibrationConfig::default(),
            osc: OscConfig::default(),
            control: ControlConfig::default(),
            midi: MidiConfig::default(),
            audio: AudioConfig::default(),
            features: FeatureConfig::default(),
            scenes: Vec::new(),
            cues: Vec::new(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl EngineConfig {
    /// Parse TOML without validating (flags may still override fields).
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_owned();
            let at = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].lines().count().max(1);
                    format!("line {line}")
                })
                .unwrap_or_else(|| "config".into());
            Error::config(at, msg)
        })
    }

    /// Read a config file, resolving relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config { at, message } => Error::config(format!("{}: {at}", path.display()), message),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.calibration.path);
        rebase(base, &mut cfg.breath);
        rebase(base, &mut cfg.midi.device);
        let out = &mut cfg.audio.output;
        if out.ends_with(".wav") && Path::new(out.as_str()).is_relative() {
            *out = base.join(out.as_str()).to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    /// Validate every field; returns the compiled scene set.
    pub fn validate(&self) -> Result<SceneSet> {
        if !(8_000..=192_000).contains(&self.sample_rate) {
            return Err(Error::config("sample_rate", format!("{} outside [8000, 192000]", self.sample_rate)));
        }
        if !self.block_size.is_power_of_two() || !(64..=1024).contains(&self.block_size) {
            return Err(Error::config(
                "block_size",
                format!("{} must be a power of two in [64, 1024]", self.block_size),
            ));
        }
        if self.mode == Mode::Offline && self.seed.is_none() {
            return Err(Error::config("seed", "required in offline mode"));
        }
        if !(self.tail_s >= 0.0 && self.tail_s.is_finite()) {
            return Err(Error::config("tail_s", "must be >= 0"));
        }
        self.features.validate()?;
        let scenes = SceneSet::build(&self.scenes)?;
        let edge_total: usize = scenes.scenes.iter().map(|s| s.matrix.edges.len()).sum();
        if edge_total > MAX_EDGES {
            return Err(Error::config("scene", format!("{edge_total} edges exceed the limit of {MAX_EDGES}")));
        }
        if scenes.index(&self.initial_scene).is_none() {
            return Err(Error::config(
                "initial_scene",
                format!("unknown scene '{}'", self.initial_scene),
            ));
        }
        for (i, c) in self.cues.iter().enumerate() {
            if !(c.at_s >= 0.0 && c.at_s.is_finite()) {
                return Err(Error::config(format!("cue[{i}].at_s"), "must be >= 0"));
            }
            if scenes.index(&c.scene).is_none() {
                return Err(Error::config(format!("cue[{i}].scene"), format!("unknown scene '{}'", c.scene)));
            }
            if i > 0 && c.at_s < self.cues[i - 1].at_s {
                return Err(Error::config(format!("cue[{i}].at_s"), "cues must be in time order"));
            }
        }
        let registry = scenes.registry();
        for (i, m) in self.midi.cc.iter().enumerate() {
            let at = format!("midi.cc[{i}]");
            if !(1..=16).contains(&m.channel) {
                return Err(Error::config(format!("{at}.channel"), "must be in 1..=16"));
            }
            if m.cc > 127 {
                return Err(Error::config(format!("{at}.cc"), "must be in 0..=127"));
            }
            if m.address == "/scene" {
                return Err(Error::config(format!("{at}.address"), "scenes cannot be driven by a CC"));
            }
            let probe = ControlEvent::number(ControlSource::Midi, m.address.clone(), m.min);
            resolve(&probe, &registry).map_err(|e| Error::config(format!("{at}.address"), e.to_string()))?;
        }
        Ok(scenes)
    }
}
