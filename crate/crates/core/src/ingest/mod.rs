//! EMG and breath acquisition: live OSC, replay files, the synthetic
//! generator, and WAV breath input.

mod breath;
pub mod osc;
mod replay;
mod synth_emg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use breath::{load_breath_wav, resample, BreathFrame, BreathSource};
pub use osc::{IngestCounters, OscParser, ParseOutcome};
pub use replay::{parse_replay, record, replay_open, Recorder, Replay, REPLAY_HEADER};
pub use synth_emg::{synth_emg, synth_emg_device, synth_session, Profile};

/// Electrodes per armband.
pub const CHANNELS: usize = 8;

/// Fixed armband sample rate.
pub const EMG_RATE_HZ: f64 = 200.0;

/// Nominal spacing of EMG samples in microseconds.
pub const EMG_PERIOD_US: u64 = 5_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Device {
    LeftArm,
    RightCalf,
}

impl Device {
    pub const ALL: [Device; 2] = [Device::LeftArm, Device::RightCalf];

    pub fn as_str(self) -> &'static str {
        match self {
            Device::LeftArm => "left_arm",
            Device::RightCalf => "right_calf",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Device {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left_arm" => Ok(Device::LeftArm),
            "right_calf" => Ok(Device::RightCalf),
            other => Err(format!("unknown device '{other}'")),
        }
    }
}

/// One raw 8-channel EMG sample from one armband.
///
/// The channel type is `i8`, so the [-128, 127] range holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmgFrame {
    pub device: Device,
    pub timestamp_us: u64,
    pub channels: [i8; CHANNELS],
}

impl EmgFrame {
    pub fn new(device: Device, timestamp_us: u64, channels: [i8; CHANNELS]) -> Self {
        Self {
            device,
            timestamp_us,
            channels,
        }
    }
}
