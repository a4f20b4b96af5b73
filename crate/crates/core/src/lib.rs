//! Real-time sonification of multi-channel EMG and breath audio.
//!
//! The signal path is `ingest` → `features` → `mapping` → `synth` → `mixer`,
//! scheduled block by block by [`engine::Engine`]. The `control` module
//! merges MIDI, OSC and WebSocket input into one address namespace that a
//! second performer uses to steer the mix and the mappings live.

pub mod control;
pub mod engine;
pub mod error;
pub mod features;
pub mod ingest;
pub mod mapping;
pub mod mixer;
pub mod synth;

pub use engine::{AudioBlock, Engine, EngineConfig, Mode};
pub use error::{Error, Result};
pub use features::{CalibrationProfile, FeatureVector, Level};
pub use ingest::{BreathFrame, Device, EmgFrame, CHANNELS, EMG_RATE_HZ};
pub use mapping::{MappingMatrix, Scene};
pub use mixer::MixerState;
pub use synth::ObjectId;
