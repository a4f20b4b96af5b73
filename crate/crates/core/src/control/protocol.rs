//! JSON messages exchanged with WebSocket clients.
//!
//! Every frame is a JSON object with a `type` field:
//!
//! - client → server: `set`
//! - server → client: `snapshot`, `diff`, `meters`, `error`
//!
//! See `docs/protocol.md` for the full schema with examples.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{addresses, ControlEvent, ControlSource, ControlValue, Registry};
use crate::engine::{EngineState, MeterFrame};
use crate::features::{CalibrationProfile, Level};
use crate::ingest::Device;
use crate::mapping::{EdgeSummary, SceneSet};
use crate::mixer::Meter;
use crate::synth::{ObjectId, ParamSpec, PARAMS};

/// A value on the wire: number, string or boolean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl From<WireValue> for ControlValue {
    fn from(v: WireValue) -> Self {
        match v {
            WireValue::Bool(b) => ControlValue::Number(if b { 1.0 } else { 0.0 }),
            WireValue::Number(x) => ControlValue::Number(x),
            WireValue::Text(t) => ControlValue::Text(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Set { address: String, value: WireValue },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn into_event(self, timestamp_us: u64) -> ControlEvent {
        match self {
            ClientMessage::Set { address, value } => ControlEvent {
                source: ControlSource::Ws,
                address,
                value: value.into(),
                timestamp_us,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub id: String,
    pub scene: String,
    pub source: String,
    pub destination: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub address: String,
    pub object: String,
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

impl From<&ParamSpec> for ParamInfo {
    fn from(p: &ParamSpec) -> Self {
        Self {
            address: p.address(),
            object: p.object.as_str().to_owned(),
            name: p.name.to_owned(),
            min: p.min,
            max: p.max,
            default: p.default,
        }
    }
}

/// The exported synthesis parameter schema.
pub fn schema() -> Vec<ParamInfo> {
    PARAMS.iter().map(ParamInfo::from).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationStatus {
    pub left_arm: bool,
    pub right_calf: bool,
}

impl From<&CalibrationProfile> for CalibrationStatus {
    fn from(p: &CalibrationProfile) -> Self {
        Self {
            left_arm: p.device(Device::LeftArm).is_some(),
            right_calf: p.device(Device::RightCalf).is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Levels {
    pub left_arm: Option<Level>,
    pub right_calf: Option<Level>,
}

impl From<[Option<Level>; 2]> for Levels {
    fn from(l: [Option<Level>; 2]) -> Self {
        Self {
            left_arm: l[0],
            right_calf: l[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeterValue {
    pub peak: f64,
    pub rms: f64,
}

impl From<Meter> for MeterValue {
    fn from(m: Meter) -> Self {
        Self { peak: m.peak, rms: m.rms }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    /// Every settable address with its current value.
    pub values: BTreeMap<String, WireValue>,
    pub scene: String,
    pub scenes: Vec<String>,
    pub edges: Vec<EdgeInfo>,
    pub calibration: CalibrationStatus,
    pub schema: Vec<ParamInfo>,
    pub levels: Levels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub address: String,
    pub value: WireValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetersMessage {
    pub block: u64,
    pub strips: BTreeMap<String, MeterValue>,
    pub master: [MeterValue; 2],
    pub levels: Levels,
}

impl From<&MeterFrame> for MetersMessage {
    fn from(m: &MeterFrame) -> Self {
        Self {
            block: m.block,
            strips: ObjectId::ALL
                .into_iter()
                .map(|o| (o.as_str().to_owned(), m.meters.strips[o.index()].into()))
                .collect(),
            master: m.meters.master.map(MeterValue::from),
            levels: m.levels.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Diff {
        seq: u64,
        changes: Vec<Change>,
    },
    Meters(MetersMessage),
    Error {
        message: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        address: Option<String>,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Address → value view of an engine state.
pub fn state_values(state: &EngineState, registry: &Registry) -> BTreeMap<String, WireValue> {
    let mut out = BTreeMap::new();
    for o in ObjectId::ALL {
        let s = state.mixer.strip(o);
        out.insert(format!("/mix/strip/{o}/gain_db"), WireValue::Number(s.gain_db));
        out.insert(format!("/mix/strip/{o}/pan"), WireValue::Number(s.pan));
        out.insert(format!("/mix/strip/{o}/send_breath"), WireValue::Number(s.send_breath));
        out.insert(format!("/mix/strip/{o}/mute"), WireValue::Bool(s.mute));
    }
    out.insert("/mix/master/gain_db".into(), WireValue::Number(state.mixer.master_gain_db));
    let scene = registry.scenes.get(state.scene as usize).cloned().unwrap_or_default();
    out.insert("/scene".into(), WireValue::Text(scene));
    for (k, (id, _, _)) in registry.edges.iter().enumerate() {
        let w = if k < state.edge_count as usize { state.weights[k] } else { 0.0 };
        out.insert(format!("/map/edge/{id}/weight"), WireValue::Number(w));
    }
    debug_assert_eq!(out.len(), addresses(registry).len());
    out
}

/// Changes from `old` to `new`, in address order.
pub fn diff(old: &BTreeMap<String, WireValue>, new: &BTreeMap<String, WireValue>) -> Vec<Change> {
    new.iter()
        .filter(|(k, v)| old.get(*k) != Some(*v))
        .map(|(k, v)| Change {
            address: k.clone(),
            value: v.clone(),
        })
        .collect()
}

/// Static per-session facts that go into every snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionInfo {
    pub registry: Registry,
    pub edges: Vec<EdgeInfo>,
    pub calibration: CalibrationStatus,
}

impl SessionInfo {
    pub fn new(scenes: &SceneSet, profile: &CalibrationProfile) -> Self {
        let edges = scenes
            .scenes
            .iter()
            .flat_map(|s| {
                s.matrix.edges.iter().map(move |e| {
                    let sum = EdgeSummary::from(e);
                    EdgeInfo {
                        id: sum.id,
                        scene: s.name.clone(),
                        source: sum.source,
                        destination: sum.destination,
                        weight: sum.weight,
                    }
                })
            })
            .collect();
        Self {
            registry: scenes.registry(),
            edges,
            calibration: profile.into(),
        }
    }

    pub fn snapshot(&self, seq: u64, state: &EngineState, levels: [Option<Level>; 2]) -> Snapshot {
        let values = state_values(state, &self.registry);
        let edges = self
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| EdgeInfo {
                weight: if k < state.edge_count as usize { state.weights[k] } else { e.weight },
                ..e.clone()
            })
            .collect();
        Snapshot {
            seq,
            scene: self.registry.scenes.get(state.scene as usize).cloned().unwrap_or_default(),
            scenes: self.registry.scenes.clone(),
            values,
            edges,
            calibration: self.calibration,
            schema: schema(),
            levels: levels.into(),
        }
    }
}
