//! The control plane: MIDI CC, OSC `/ctl/*` and WebSocket clients all speak
//! one address namespace.
//!
//! | address                               | value            |
//! |---------------------------------------|------------------|
//! | `/mix/strip/<object>/gain_db`         | dB in [-60, 6]   |
//! | `/mix/strip/<object>/pan`             | [-1, 1]          |
//! | `/mix/strip/<object>/send_breath`     | [0, 1]           |
//! | `/mix/strip/<object>/mute`            | bool (>= 0.5)    |
//! | `/mix/master/gain_db`                 | dB in [-60, 6]   |
//! | `/scene`                              | scene name       |
//! | `/map/edge/<id>/weight`               | [-1, 1]          |
//!
//! Events are resolved against a [`Registry`] into copyable [`Command`]s
//! before they reach the audio context.

mod midi;
pub mod protocol;
mod server;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{GAIN_MAX_DB, GAIN_MIN_DB};
use crate::synth::ObjectId;

pub use midi::{translate_midi, CcMap, CcMapping, MidiParser};
pub use server::{ControlHub, ControlServer, EngineEnd, EngineLink, HubConfig, HubSender, LocalSession};

/// Default WebSocket port.
pub const DEFAULT_WS_PORT: u16 = 9130;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSource {
    Midi,
    Osc,
    Ws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ControlValue {
    Number(f64),
    Text(String),
}

impl fmt::Display for ControlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlValue::Number(v) => write!(f, "{v}"),
            ControlValue::Text(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlEvent {
    pub source: ControlSource,
    pub address: String,
    pub value: ControlValue,
    pub timestamp_us: u64,
}

impl ControlEvent {
    pub fn number(source: ControlSource, address: impl Into<String>, value: f64) -> Self {
        Self {
            source,
            address: address.into(),
            value: ControlValue::Number(value),
            timestamp_us: 0,
        }
    }

    pub fn text(source: ControlSource, address: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            source,
            address: address.into(),
            value: ControlValue::Text(value.into()),
            timestamp_us: 0,
        }
    }
}

/// A resolved, allocation-free control change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    StripGain(ObjectId, f64),
    StripPan(ObjectId, f64),
    StripSend(ObjectId, f64),
    StripMute(ObjectId, bool),
    MasterGain(f64),
    Scene(u8),
    EdgeWeight { scene: u8, edge: u16, weight: f64 },
}

/// Outcome of resolving an event: the command and whether the value had to
/// be clamped into range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub command: Command,
    pub clamped: bool,
}

/// Names the control plane can address beyond the fixed mixer strips.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    pub scenes: Vec<String>,
    /// Edge id, owning scene index, edge index within that scene.
    pub edges: Vec<(String, u8, u16)>,
}

impl Registry {
    pub fn scene_index(&self, name: &str) -> Option<u8> {
        self.scenes.iter().position(|s| s == name).map(|i| i as u8)
    }
}

/// Every settable address, in a stable order.
pub fn addresses(registry: &Registry) -> Vec<String> {
    let mut out = Vec::new();
    for o in ObjectId::ALL {
        for field in ["gain_db", "pan", "send_breath", "mute"] {
            out.push(format!("/mix/strip/{o}/{field}"));
        }
    }
    out.push("/mix/master/gain_db".to_owned());
    out.push("/scene".to_owned());
    for (id, _, _) in &registry.edges {
        out.push(format!("/map/edge/{id}/weight"));
    }
    out
}

fn number(ev: &ControlEvent) -> Result<f64> {
    match &ev.value {
        ControlValue::Number(v) if v.is_finite() => Ok(*v),
        ControlValue::Number(v) => Err(Error::Control(format!("{}: value {v} is not finite", ev.address))),
        ControlValue::Text(t) => t
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Control(format!("{}: expected a number, got '{t}'", ev.address))),
    }
}

fn flag(ev: &ControlEvent) -> Result<bool> {
    match &ev.value {
        ControlValue::Text(t) if t == "true" => Ok(true),
        ControlValue::Text(t) if t == "false" => Ok(false),
        _ => Ok(number(ev)? >= 0.5),
    }
}

fn clamped(v: f64, lo: f64, hi: f64) -> (f64, bool) {
    let c = v.clamp(lo, hi);
    (c, c != v)
}

/// Resolve an event against the registry. Unknown addresses and
/// unparseable values are errors; out-of-range numbers are clamped.
pub fn resolve(ev: &ControlEvent, registry: &Registry) -> Result<Resolved> {
    let unknown = || Error::Control(format!("unknown address '{}'", ev.address));
    let parts: Vec<&str> = ev.address.split('/').collect();
    let (command, clamped) = match parts.as_slice() {
        ["", "mix", "strip", object, field] => {
            let object: ObjectId = object.parse().map_err(|_| unknown())?;
            match *field {
                "gain_db" => {
                    let (v, c) = clamped(number(ev)?, GAIN_MIN_DB, GAIN_MAX_DB);
                    (Command::StripGain(object, v), c)
                }
                "pan" => {
                    let (v, c) = clamped(number(ev)?, -1.0, 1.0);
                    (Command::StripPan(object, v), c)
                }
                "send_breath" => {
                    let (v, c) = clamped(number(ev)?, 0.0, 1.0);
                    (Command::StripSend(object, v), c)
                }
                "mute" => (Command::StripMute(object, flag(ev)?), false),
                _ => return Err(unknown()),
            }
        }
        ["", "mix", "master", "gain_db"] => {
            let (v, c) = clamped(number(ev)?, GAIN_MIN_DB, GAIN_MAX_DB);
            (Command::MasterGain(v), c)
        }
        ["", "scene"] => {
            let name = match &ev.value {
                ControlValue::Text(t) => t.as_str(),
                ControlValue::Number(_) => {
                    return Err(Error::Control("/scene: expected a scene name".into()));
                }
            };
            let idx = registry
                .scene_index(name)
                .ok_or_else(|| Error::Control(format!("unknown scene '{name}'")))?;
            (Command::Scene(idx), false)
        }
        ["", "map", "edge", id, "weight"] => {
            let &(_, scene, edge) = registry
                .edges
                .iter()
                .find(|(e, _, _)| e == id)
                .ok_or_else(unknown)?;
            let (v, c) = clamped(number(ev)?, -1.0, 1.0);
            (Command::EdgeWeight { scene, edge, weight: v }, c)
        }
        _ => return Err(unknown()),
    };
    if clamped {
        log::warn!("{}: value {} clamped", ev.address, ev.value);
    }
    Ok(Resolved { command, clamped })
}
