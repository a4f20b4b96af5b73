//! MIDI control-change input mapped onto the control namespace.

use serde::{Deserialize, Serialize};

use super::{ControlEvent, ControlSource, ControlValue};

/// One `[[midi.cc]]` row: `(channel, cc)` drives `address` over `[min, max]`.
/// Channels are 1-based as printed on controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcMapping {
    pub channel: u8,
    pub cc: u8,
    pub address: String,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CcMap {
    pub entries: Vec<CcMapping>,
}

impl CcMap {
    pub fn new(entries: Vec<CcMapping>) -> Self {
        Self { entries }
    }

    pub fn lookup(&self, channel: u8, cc: u8) -> Option<&CcMapping> {
        self.entries.iter().find(|m| m.channel == channel && m.cc == cc)
    }
}

/// Translate one 3-byte channel message. Anything other than a mapped
/// control change yields `None`.
pub fn translate_midi(msg: [u8; 3], map: &CcMap, timestamp_us: u64) -> Option<ControlEvent> {
    if msg[0] & 0xF0 != 0xB0 {
        return None;
    }
    let channel = (msg[0] & 0x0F) + 1;
    let m = map.lookup(channel, msg[1] & 0x7F)?;
    let x = (msg[2] & 0x7F) as f64 / 127.0;
    Some(ControlEvent {
        source: ControlSource::Midi,
        address: m.address.clone(),
        value: ControlValue::Number(m.min + x * (m.max - m.min)),
        timestamp_us,
    })
}

/// Byte-stream parser for raw MIDI (running status, realtime bytes
/// interleaved, SysEx skipped). Yields complete control-change messages.
#[derive(Debug, Default)]
pub struct MidiParser {
    status: Option<u8>,
    data: [u8; 2],
    len: usize,
    in_sysex: bool,
}

impl MidiParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed one byte; returns a CC message when one completes.
    pub fn push(&mut self, b: u8) -> Option<[u8; 3]> {
        if b >= 0xF8 {
            return None;
        }
        if b == 0xF0 {
            self.in_sysex = true;
            self.status = None;
            return None;
        }
        if b >= 0x80 {
            self.in_sysex = false;
            self.status = if b < 0xF0 { Some(b) } else { None };
            self.len = 0;
            return None;
        }
        if self.in_sysex {
            return None;
        }
        let status = self.status?;
        let needed = match status & 0xF0 {
            0xC0 | 0xD0 => 1,
            _ => 2,
        };
        self.data[self.len] = b;
        self.len += 1;
        if self.len < needed {
            return None;
        }
        self.len = 0;
        if status & 0xF0 == 0xB0 {
            Some([status, self.data[0], self.data[1]])
        } else {
            None
        }
    }
}
