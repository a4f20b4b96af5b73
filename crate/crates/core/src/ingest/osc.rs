//! OSC 1.0 codec and the EMG/control packet parser.
//!
//! Only the argument types that appear on the wire from myo-to-osc and
//! common control surfaces are decoded (`i f s b h d T F N I`); anything
//! else is reported as malformed.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use super::{Device, EmgFrame, CHANNELS};
use crate::control::{ControlEvent, ControlSource, ControlValue};

/// Default UDP port for EMG and `/ctl/*` traffic.
pub const DEFAULT_PORT: u16 = 9129;

/// Largest datagram we expect to receive.
pub const MAX_DATAGRAM: usize = 1536;

const BUNDLE_TAG: &[u8] = b"#bundle\0";

#[derive(Debug, Clone, PartialEq)]
pub enum OscArg {
    Int(i32),
    Float(f32),
    Str(String),
    Blob(Vec<u8>),
    Long(i64),
    Double(f64),
    Bool(bool),
    Nil,
    Impulse,
}

impl OscArg {
    fn tag(&self) -> u8 {
        match self {
            OscArg::Int(_) => b'i',
            OscArg::Float(_) => b'f',
            OscArg::Str(_) => b's',
            OscArg::Blob(_) => b'b',
            OscArg::Long(_) => b'h',
            OscArg::Double(_) => b'd',
            OscArg::Bool(true) => b'T',
            OscArg::Bool(false) => b'F',
            OscArg::Nil => b'N',
            OscArg::Impulse => b'I',
        }
    }

    /// Numeric value, if the argument has one.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            OscArg::Int(v) => Some(v as f64),
            OscArg::Float(v) => Some(v as f64),
            OscArg::Long(v) => Some(v as f64),
            OscArg::Double(v) => Some(v),
            OscArg::Bool(b) => Some(if b { 1.0 } else { 0.0 }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscMessage {
    pub addr: String,
    pub args: Vec<OscArg>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OscPacket {
    Message(OscMessage),
    Bundle {
        timetag: u64,
        content: Vec<OscPacket>,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OscError {
    #[error("packet truncated")]
    Truncated,
    #[error("packet length {0} is not a multiple of 4")]
    Misaligned(usize),
    #[error("string is not null-terminated or not UTF-8")]
    BadString,
    #[error("address must start with '/'")]
    BadAddress,
    #[error("type tag string must start with ','")]
    BadTypeTags,
    #[error("unsupported argument type '{0}'")]
    UnsupportedType(char),
    #[error("bundle nesting too deep")]
    TooDeep,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], OscError> {
        let end = self.pos.checked_add(n).ok_or(OscError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(OscError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn string(&mut self) -> Result<String, OscError> {
        let rest = &self.buf[self.pos..];
        let nul = rest.iter().position(|&b| b == 0).ok_or(OscError::BadString)?;
        let s = std::str::from_utf8(&rest[..nul]).map_err(|_| OscError::BadString)?;
        let padded = (nul + 4) & !3;
        self.take(padded)?;
        Ok(s.to_owned())
    }

    fn u32(&mut self) -> Result<u32, OscError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, OscError> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_be_bytes(a))
    }
}

/// Decode one OSC packet (message or bundle).
pub fn decode(bytes: &[u8]) -> Result<OscPacket, OscError> {
    decode_at_depth(bytes, 0)
}

fn decode_at_depth(bytes: &[u8], depth: usize) -> Result<OscPacket, OscError> {
    if depth > 8 {
        return Err(OscError::TooDeep);
    }
    if bytes.len() % 4 != 0 {
        return Err(OscError::Misaligned(bytes.len()));
    }
    if bytes.starts_with(BUNDLE_TAG) {
        let mut r = Reader { buf: bytes, pos: 8 };
        let timetag = r.u64()?;
        let mut content = Vec::new();
        while r.pos < bytes.len() {
            let size = r.u32()? as usize;
            let elem = r.take(size)?;
            content.push(decode_at_depth(elem, depth + 1)?);
        }
        return Ok(OscPacket::Bundle { timetag, content });
    }
    decode_message(bytes).map(OscPacket::Message)
}

fn decode_message(bytes: &[u8]) -> Result<OscMessage, OscError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let addr = r.string()?;
    if !addr.starts_with('/') {
        return Err(OscError::BadAddress);
    }
    // A message with no type tag string is legal in old senders; treat as no args.
    if r.pos == bytes.len() {
        return Ok(OscMessage {
            addr,
            args: Vec::new(),
        });
    }
    let tags = r.string()?;
    let tags = tags.strip_prefix(',').ok_or(OscError::BadTypeTags)?;
    let mut args = Vec::with_capacity(tags.len());
    for t in tags.chars() {
        let arg = match t {
            'i' => OscArg::Int(r.u32()? as i32),
            'f' => OscArg::Float(f32::from_bits(r.u32()?)),
            's' => OscArg::Str(r.string()?),
            'b' => {
                let n = r.u32()? as usize;
                let data = r.take(n)?.to_vec();
                r.take((4 - n % 4) % 4)?;
                OscArg::Blob(data)
            }
            'h' => OscArg::Long(r.u64()? as i64),
            'd' => OscArg::Double(f64::from_bits(r.u64()?)),
            'T' => OscArg::Bool(true),
            'F' => OscArg::Bool(false),
            'N' => OscArg::Nil,
            'I' => OscArg::Impulse,
            other => return Err(OscError::UnsupportedType(other)),
        };
        args.push(arg);
    }
    if r.pos != bytes.len() {
        return Err(OscError::Truncated);
    }
    Ok(OscMessage { addr, args })
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(s.as_bytes());
    let pad = 4 - s.len() % 4;
    out.extend(std::iter::repeat_n(0u8, pad));
}

/// Encode a single OSC message.
pub fn encode_message(msg: &OscMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    put_string(&mut out, &msg.addr);
    let mut tags = String::with_capacity(msg.args.len() + 1);
    tags.push(',');
    tags.extend(msg.args.iter().map(|a| a.tag() as char));
    put_string(&mut out, &tags);
    for arg in &msg.args {
        match arg {
            OscArg::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Float(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
            OscArg::Str(s) => put_string(&mut out, s),
            OscArg::Blob(b) => {
                out.extend_from_slice(&(b.len() as u32).to_be_bytes());
                out.extend_from_slice(b);
                out.extend(std::iter::repeat_n(0u8, (4 - b.len() % 4) % 4));
            }
            OscArg::Long(v) => out.extend_from_slice(&v.to_be_bytes()),
            OscArg::Double(v) => out.extend_from_slice(&v.to_bits().to_be_bytes()),
            OscArg::Bool(_) | OscArg::Nil | OscArg::Impulse => {}
        }
    }
    out
}

/// Encode a bundle of already-encoded elements.
pub fn encode_bundle(timetag: u64, elements: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::from(BUNDLE_TAG);
    out.extend_from_slice(&timetag.to_be_bytes());
    for e in elements {
        out.extend_from_slice(&(e.len() as u32).to_be_bytes());
        out.extend_from_slice(e);
    }
    out
}

/// Wire address for a device's EMG stream.
pub fn emg_address(device: Device) -> &'static str {
    match device {
        Device::LeftArm => "/myo/left_arm/emg",
        Device::RightCalf => "/myo/right_calf/emg",
    }
}

/// Encode an EMG frame the way myo-to-osc sends it (`,iiiiiiii`).
pub fn encode_emg(frame: &EmgFrame) -> Vec<u8> {
    encode_message(&OscMessage {
        addr: emg_address(frame.device).to_owned(),
        args: frame.channels.iter().map(|&c| OscArg::Int(c as i32)).collect(),
    })
}

/// Monotonic drop/malformed counters, shareable with monitoring threads.
#[derive(Debug, Default)]
pub struct IngestCounters {
    pub received: AtomicU64,
    pub dropped: AtomicU64,
    pub malformed: AtomicU64,
}

impl IngestCounters {
    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }

    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn received(&self) -> u64 {
        self.received.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseOutcome {
    Emg(EmgFrame),
    Control(ControlEvent),
    Ignored,
}

/// Turns datagrams into frames and control events.
///
/// Frames are stamped with the caller-supplied receipt time; if the clock
/// does not advance between two packets from the same device the stamp is
/// nudged forward by 1 µs so per-device timestamps stay strictly increasing.
#[derive(Debug, Default)]
pub struct OscParser {
    counters: Arc<IngestCounters>,
    last_stamp: [Option<u64>; 2],
}

impl OscParser {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_counters(counters: Arc<IngestCounters>) -> Self {
        Self {
            counters,
            last_stamp: [None; 2],
        }
    }

    pub fn counters(&self) -> &Arc<IngestCounters> {
        &self.counters
    }

    /// Parse one datagram that is expected to hold a single message.
    /// Bundles are accepted and their first element is returned; use
    /// [`OscParser::parse_datagram`] to get every element.
    pub fn parse_osc_packet(&mut self, packet: &[u8], receipt_us: u64) -> ParseOutcome {
        let mut first = None;
        self.parse_datagram(packet, receipt_us, |o| {
            if first.is_none() {
                first = Some(o);
            }
        });
        first.unwrap_or(ParseOutcome::Ignored)
    }

    /// Parse a datagram, flattening bundles, and hand every outcome to `sink`.
    pub fn parse_datagram(
        &mut self,
        packet: &[u8],
        receipt_us: u64,
        mut sink: impl FnMut(ParseOutcome),
    ) {
        self.counters.received.fetch_add(1, Ordering::Relaxed);
        match decode(packet) {
            Ok(p) => self.walk(p, receipt_us, &mut sink),
            Err(_) => {
                self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                sink(ParseOutcome::Ignored);
            }
        }
    }

    fn walk(&mut self, p: OscPacket, receipt_us: u64, sink: &mut impl FnMut(ParseOutcome)) {
        match p {
            OscPacket::Message(m) => {
                let o = self.classify(m, receipt_us);
                sink(o)
            }
            OscPacket::Bundle { content, .. } => {
                for c in content {
                    self.walk(c, receipt_us, sink);
                }
            }
        }
    }

    fn classify(&mut self, msg: OscMessage, receipt_us: u64) -> ParseOutcome {
        if let Some(device) = emg_device(&msg.addr) {
            return match emg_channels(&msg.args) {
                Some(channels) => {
                    let ts = self.stamp(device, receipt_us);
                    ParseOutcome::Emg(EmgFrame::new(device, ts, channels))
                }
                None => {
                    self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                    ParseOutcome::Ignored
                }
            };
        }
        if let Some(path) = msg.addr.strip_prefix("/ctl/") {
            let value = match msg.args.as_slice() {
                [OscArg::Str(s)] => Some(ControlValue::Text(s.clone())),
                [a] => a.as_f64().filter(|v| v.is_finite()).map(ControlValue::Number),
                _ => None,
            };
            return match value {
                Some(value) if !path.is_empty() => ParseOutcome::Control(ControlEvent {
                    source: ControlSource::Osc,
                    address: format!("/{path}"),
                    value,
                    timestamp_us: receipt_us,
                }),
                _ => {
                    self.counters.malformed.fetch_add(1, Ordering::Relaxed);
                    ParseOutcome::Ignored
                }
            };
        }
        self.counters.dropped.fetch_add(1, Ordering::Relaxed);
        ParseOutcome::Ignored
    }

    fn stamp(&mut self, device: Device, receipt_us: u64) -> u64 {
        let slot = &mut self.last_stamp[device.index()];
        let ts = match *slot {
            Some(prev) if receipt_us <= prev => prev + 1,
            _ => receipt_us,
        };
        *slot = Some(ts);
        ts
    }
}

fn emg_device(addr: &str) -> Option<Device> {
    match addr {
        "/myo/left_arm/emg" => Some(Device::LeftArm),
        "/myo/right_calf/emg" => Some(Device::RightCalf),
        _ => None,
    }
}

fn emg_channels(args: &[OscArg]) -> Option<[i8; CHANNELS]> {
    if args.len() != CHANNELS {
        return None;
    }
    let mut out = [0i8; CHANNELS];
    for (o, a) in out.iter_mut().zip(args) {
        match a {
            OscArg::Int(v) => *o = i8::try_from(*v).ok()?,
            _ => return None,
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent byte-level encoder for `,iiiiiiii` EMG messages, written
    /// straight from the OSC 1.0 layout rules.
    fn oracle_encode(addr: &str, vals: &[i32]) -> Vec<u8> {
        let mut out = Vec::new();
        let pad_str = |out: &mut Vec<u8>, s: &[u8]| {
            out.extend_from_slice(s);
            out.push(0);
            while out.len() % 4 != 0 {
                out.push(0);
            }
        };
        pad_str(&mut out, addr.as_bytes());
        let mut tags = vec![b','];
        tags.extend(std::iter::repeat_n(b'i', vals.len()));
        pad_str(&mut out, &tags);
        for v in vals {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out
    }

    #[test]
    fn zero_frame_left_arm() {
        let mut p = OscParser::new();
        let pkt = oracle_encode("/myo/left_arm/emg", &[0; 8]);
        match p.parse_osc_packet(&pkt, 10) {
            ParseOutcome::Emg(f) => {
                assert_eq!(f.device, Device::LeftArm);
                assert_eq!(f.channels, [0; 8]);
                assert_eq!(f.timestamp_us, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extreme_values_right_calf_match_oracle_bytes() {
        let vals = [127, -128, 1, 2, 3, 4, 5, 6];
        let pkt = oracle_encode("/myo/right_calf/emg", &vals);
        let mut p = OscParser::new();
        let f = match p.parse_osc_packet(&pkt, 0) {
            ParseOutcome::Emg(f) => f,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(f.device, Device::RightCalf);
        assert_eq!(f.channels, [127, -128, 1, 2, 3, 4, 5, 6]);
        assert_eq!(encode_emg(&f), pkt);
    }

    #[test]
    fn unknown_address_counts_drop() {
        let mut p = OscParser::new();
        let pkt = oracle_encode("/unknown/addr", &[1, 2]);
        assert_eq!(p.parse_osc_packet(&pkt, 0), ParseOutcome::Ignored);
        assert_eq!(p.counters().dropped(), 1);
        assert_eq!(p.counters().malformed(), 0);
    }

    #[test]
    fn out_of_range_channel_is_malformed() {
        let mut p = OscParser::new();
        let pkt = oracle_encode("/myo/left_arm/emg", &[0, 0, 0, 300, 0, 0, 0, 0]);
        assert_eq!(p.parse_osc_packet(&pkt, 0), ParseOutcome::Ignored);
        assert_eq!(p.counters().malformed(), 1);
    }

    #[test]
    fn ctl_message_becomes_control_event() {
        let msg = OscMessage {
            addr: "/ctl/mix/master/gain_db".into(),
            args: vec![OscArg::Float(-3.0)],
        };
        let mut p = OscParser::new();
        match p.parse_osc_packet(&encode_message(&msg), 42) {
            ParseOutcome::Control(ev) => {
                assert_eq!(ev.address, "/mix/master/gain_db");
                assert_eq!(ev.value, ControlValue::Number(-3.0));
                assert_eq!(ev.source, ControlSource::Osc);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stamps_strictly_increase_per_device() {
        let mut p = OscParser::new();
        let pkt = oracle_encode("/myo/left_arm/emg", &[0; 8]);
        let a = p.parse_osc_packet(&pkt, 100);
        let b = p.parse_osc_packet(&pkt, 100);
        let c = p.parse_osc_packet(&pkt, 50);
        let ts: Vec<u64> = [a, b, c]
            .into_iter()
            .map(|o| match o {
                ParseOutcome::Emg(f) => f.timestamp_us,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ts, vec![100, 101, 102]);
    }

    #[test]
    fn bundles_are_flattened() {
        let a = oracle_encode("/myo/left_arm/emg", &[1; 8]);
        let b = oracle_encode("/myo/right_calf/emg", &[2; 8]);
        let bundle = encode_bundle(1, &[a, b]);
        let mut p = OscParser::new();
        let mut got = Vec::new();
        p.parse_datagram(&bundle, 7, |o| got.push(o));
        assert_eq!(got.len(), 2);
        assert!(matches!(got[1], ParseOutcome::Emg(f) if f.device == Device::RightCalf));
    }

    #[test]
    fn general_message_roundtrip() {
        let msg = OscMessage {
            addr: "/x/y".into(),
            args: vec![
                OscArg::Int(-5),
                OscArg::Float(0.25),
                OscArg::Str("hello".into()),
                OscArg::Blob(vec![1, 2, 3]),
                OscArg::Long(1 << 40),
                OscArg::Double(1e-3),
                OscArg::Bool(true),
                OscArg::Nil,
            ],
        };
        assert_eq!(decode(&encode_message(&msg)), Ok(OscPacket::Message(msg)));
    }

    proptest! {
        #[test]
        fn emg_encode_parse_roundtrip(ch in proptest::array::uniform8(any::<i8>()), calf in any::<bool>()) {
            let device = if calf { Device::RightCalf } else { Device::LeftArm };
            let vals: Vec<i32> = ch.iter().map(|&c| c as i32).collect();
            let pkt = oracle_encode(emg_address(device), &vals);
            let mut p = OscParser::new();
            let frame = match p.parse_osc_packet(&pkt, 0) {
                ParseOutcome::Emg(f) => f,
                other => panic!("unexpected {other:?}"),
            };
            prop_assert_eq!(frame.channels, ch);
            prop_assert_eq!(encode_emg(&frame), pkt);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let mut p = OscParser::new();
            let before = (p.counters().dropped(), p.counters().malformed());
            let _ = p.parse_osc_packet(&bytes, 0);
            prop_assert!(p.counters().dropped() >= before.0);
            prop_assert!(p.counters().malformed() >= before.1);
        }
    }
}
