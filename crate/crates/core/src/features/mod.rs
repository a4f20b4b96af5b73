//! EMG feature extraction: rectification, envelopes, windowed MAV,
//! calibration into MVC units, and the micro/meso/macro level regime.

mod calibration;
mod kernels;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use calibration::{
    calibrate, normalize, CalibrationProfile, DeviceCalibration, MIN_CALIBRATION_S, NOMINAL, NORMALIZED_MAX,
};
pub use kernels::{
    mav, rectify, rms, smoothing_alpha, waveform_length, zero_crossings, Channels, Mav, MavWindow, Smoother,
};

use crate::error::{Error, Result};
use crate::ingest::{Device, EmgFrame, CHANNELS};

/// Header of the feature CSV written by `analyze` and by live sessions.
pub const FEATURE_HEADER: &str = "timestamp_us,device,mav1,mav2,mav3,mav4,mav5,mav6,mav7,mav8,mav_agg,level";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Micro,
    Meso,
    Macro,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Micro, Level::Meso, Level::Macro];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Micro => "micro",
            Level::Meso => "meso",
            Level::Macro => "macro",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Level::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown level '{s}'"))
    }
}

/// Feature-stage settings (`[features]` in the config).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub tau_s: f64,
    pub window: usize,
    pub hop: usize,
    pub micro_max: f64,
    pub macro_min: f64,
    pub hysteresis: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            tau_s: 0.1,
            window: 50,
            hop: 10,
            micro_max: 0.08,
            macro_min: 0.40,
            hysteresis: 0.01,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(format!("features.{field}"), msg));
        if !(self.tau_s > 0.0 && self.tau_s.is_finite()) {
            return bad("tau_s", "must be > 0");
        }
        if self.window == 0 {
            return bad("window", "must be >= 1");
        }
        if self.hop == 0 {
            return bad("hop", "must be >= 1");
        }
        if !(self.micro_max > 0.0 && self.micro_max < self.macro_min) {
            return bad("micro_max", "must satisfy 0 < micro_max < macro_min");
        }
        if !(self.hysteresis >= 0.0 && self.hysteresis < self.micro_max) {
            return bad("hysteresis", "must satisfy 0 <= hysteresis < micro_max");
        }
        Ok(())
    }
}

/// Three-level classifier with hysteresis: a label moves up as soon as the
/// value reaches a threshold and moves back down only once the value falls
/// `hysteresis` below it.
#[derive(Debug, Clone, Copy)]
pub struct LevelClassifier {
    pub level: Level,
    micro_max: f64,
    macro_min: f64,
    hysteresis: f64,
}

impl LevelClassifier {
    pub fn new(cfg: &FeatureConfig) -> Self {
        Self {
            level: Level::Micro,
            micro_max: cfg.micro_max,
            macro_min: cfg.macro_min,
            hysteresis: cfg.hysteresis,
        }
    }

    pub fn classify(&mut self, x: f64) -> Level {
        let h = self.hysteresis;
        let lower = if self.level > Level::Micro { self.micro_max - h } else { self.micro_max };
        let upper = if self.level == Level::Macro { self.macro_min - h } else { self.macro_min };
        self.level = if x >= upper {
            Level::Macro
        } else if x >= lower {
            Level::Meso
        } else {
            Level::Micro
        };
        self.level
    }
}

/// One feature hop for one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub device: Device,
    /// Timestamp of the newest sample in the window.
    pub timestamp_us: u64,
    /// Window MAV in rectified quantization units.
    pub mav_raw: Channels,
    /// Window MAV in MVC units, in [0, 1.5].
    pub mav_per_channel: Channels,
    /// Mean of `mav_per_channel`.
    pub mav_aggregate: f64,
    pub level: Level,
    /// One-pole envelope of the rectified signal, in MVC units.
    pub envelope: Channels,
    /// Some channel exceeded its calibrated maximum.
    pub overshoot: bool,
}

impl FeatureVector {
    /// The feature CSV row (no trailing newline).
    pub fn csv_row(&self) -> String {
        use std::fmt::Write;
        let mut s = format!("{},{}", self.timestamp_us, self.device);
        for v in &self.mav_per_channel {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{},{}", self.mav_aggregate, self.level);
        s
    }
}

#[derive(Debug, Clone)]
struct DeviceState {
    window: MavWindow,
    smoother: Smoother,
    classifier: LevelClassifier,
    cal: DeviceCalibration,
}

/// Streaming feature extractor for both devices. Allocation-free after
/// construction.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    cfg: FeatureConfig,
    devices: [DeviceState; 2],
}

impl FeatureExtractor {
    pub fn new(cfg: FeatureConfig, profile: &CalibrationProfile) -> Self {
        let devices = Device::ALL.map(|d| DeviceState {
            window: MavWindow::new(cfg.window, cfg.hop),
            smoother: Smoother::new(cfg.tau_s),
            classifier: LevelClassifier::new(&cfg),
            cal: profile.for_device(d),
        });
        Self { cfg, devices }
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Advance with one frame; returns a feature vector on hop boundaries.
    pub fn push(&mut self, frame: &EmgFrame) -> Option<FeatureVector> {
        let st = &mut self.devices[frame.device.index()];
        let x = rectify(frame);
        let env = st.smoother.smooth(&x);
        let mav_raw = st.window.push(&x)?;
        let span: Channels = std::array::from_fn(|i| st.cal.mvc_max[i] - st.cal.rest_baseline[i]);
        let overshoot = (0..CHANNELS).any(|i| mav_raw[i] > st.cal.mvc_max[i]);
        let norm = normalize(&mav_raw, &st.cal);
        let agg = norm.iter().sum::<f64>() / CHANNELS as f64;
        let level = st.classifier.classify(agg);
        let envelope =
            std::array::from_fn(|i| ((env[i] - st.cal.rest_baseline[i]) / span[i]).clamp(0.0, NORMALIZED_MAX));
        Some(FeatureVector {
            device: frame.device,
            timestamp_us: frame.timestamp_us,
            mav_raw,
            mav_per_channel: norm,
            mav_aggregate: agg,
            level,
            envelope,
            overshoot,
        })
    }

    pub fn reset(&mut self) {
        for st in &mut self.devices {
            st.window.reset();
            st.smoother = Smoother::new(self.cfg.tau_s);
            st.classifier = LevelClassifier::new(&self.cfg);
        }
    }
}

/// Run the extractor over a whole frame sequence (offline analysis).
pub fn analyze(frames: &[EmgFrame], cfg: FeatureConfig, profile: &CalibrationProfile) -> Vec<FeatureVector> {
    let mut fx = FeatureExtractor::new(cfg, profile);
    frames.iter().filter_map(|f| fx.push(f)).collect()
}

/// Render feature vectors as the CSV document (header plus rows).
pub fn features_csv(fvs: &[FeatureVector]) -> String {
    let mut s = String::with_capacity(64 + fvs.len() * 160);
    s.push_str(FEATURE_HEADER);
    s.push('\n');
    for fv in fvs {
        s.push_str(&fv.csv_row());
        s.push('\n');
    }
    s
}
