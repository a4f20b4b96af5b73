//! Rest/MVC calibration and normalization into MVC units.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::kernels::{rectify, Channels, MavWindow};
use crate::error::{Error, Result};
use crate::ingest::{Device, EmgFrame, CHANNELS, EMG_RATE_HZ};

/// Normalized activations are clamped to this ceiling.
pub const NORMALIZED_MAX: f64 = 1.5;
/// Minimum length of each calibration recording.
pub const MIN_CALIBRATION_S: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceCalibration {
    pub rest_baseline: Channels,
    pub mvc_max: Channels,
}

impl DeviceCalibration {
    pub fn validate(&self, device: Device) -> Result<()> {
        for ch in 0..CHANNELS {
            let (r, m) = (self.rest_baseline[ch], self.mvc_max[ch]);
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Calibration(format!(
                    "{device} ch{}: rest baseline {r} must be finite and >= 0",
                    ch + 1
                )));
            }
            if !(m > r) || !m.is_finite() {
                return Err(Error::Calibration(format!(
                    "{device} ch{}: mvc_max {m} must exceed rest_baseline {r}",
                    ch + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-device calibration; devices without an entry use the nominal range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProfile {
    /// Unix seconds; honours `SOURCE_DATE_EPOCH` for reproducible files.
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left_arm: Option<DeviceCalibration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right_calf: Option<DeviceCalibration>,
}

/// Range assumed when a device has not been calibrated.
pub const NOMINAL: DeviceCalibration = DeviceCalibration {
    rest_baseline: [1.0; CHANNELS],
    mvc_max: [50.0; CHANNELS],
};

impl Default for CalibrationProfile {
    fn default() -> Self {
        Self {
            created_unix: 0,
            left_arm: None,
            right_calf: None,
        }
    }
}

fn now_unix() -> u64 {
    if let Some(s) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.trim().parse().ok()) {
        return s;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl CalibrationProfile {
    pub fn device(&self, d: Device) -> Option<&DeviceCalibration> {
        match d {
            Device::LeftArm => self.left_arm.as_ref(),
            Device::RightCalf => self.right_calf.as_ref(),
        }
    }

    /// The device's calibration, or [`NOMINAL`].
    pub fn for_device(&self, d: Device) -> DeviceCalibration {
        self.device(d).copied().unwrap_or(NOMINAL)
    }

    pub fn set(&mut self, d: Device, cal: DeviceCalibration) {
        match d {
            Device::LeftArm => self.left_arm = Some(cal),
            Device::RightCalf => self.right_calf = Some(cal),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.left_arm.is_some() || self.right_calf.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        for d in Device::ALL {
            if let Some(c) = self.device(d) {
                c.validate(d)?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration profile serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Calibration(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Calibration(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }
}

/// `clamp((mav - rest) / (mvc - rest), 0, 1.5)` per channel.
pub fn normalize(mav: &Channels, cal: &DeviceCalibration) -> Channels {
    std::array::from_fn(|i| {
        let span = cal.mvc_max[i] - cal.rest_baseline[i];
        ((mav[i] - cal.rest_baseline[i]) / span).clamp(0.0, NORMALIZED_MAX)
    })
}

fn mav_series(frames: &[EmgFrame], window: usize, hop: usize) -> Vec<Channels> {
    let mut w = MavWindow::new(window, hop);
    frames.iter().filter_map(|f| w.push(&rectify(f))).collect()
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Nearest-rank percentile (`p` in (0, 100]).
fn percentile(xs: &mut [f64], p: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * xs.len() as f64).ceil() as usize;
    xs[rank.clamp(1, xs.len()) - 1]
}

/// Build a profile from a rest recording and a maximum-contraction recording.
/// Every device present in `rest` must also appear in `mvc`, each with at
/// least three seconds of frames.
pub fn calibrate(rest: &[EmgFrame], mvc: &[EmgFrame], window: usize, hop: usize) -> Result<CalibrationProfile> {
    let min_frames = (MIN_CALIBRATION_S * EMG_RATE_HZ) as usize;
    let mut profile = CalibrationProfile {
        created_unix: now_unix(),
        ..Default::default()
    };
    let mut any = false;
    for d in Device::ALL {
        let r: Vec<EmgFrame> = rest.iter().filter(|f| f.device == d).copied().collect();
        let m: Vec<EmgFrame> = mvc.iter().filter(|f| f.device == d).copied().collect();
        if r.is_empty() && m.is_empty() {
            continue;
        }
        for (what, frames) in [("rest", &r), ("mvc", &m)] {
            if frames.len() < min_frames {
                return Err(Error::Calibration(format!(
                    "{d}: {what} recording has {} frames, need at least {min_frames} (3 s)",
                    frames.len()
                )));
            }
        }
        let rs = mav_series(&r, window, hop);
        let ms = mav_series(&m, window, hop);
        let mut cal = DeviceCalibration {
            rest_baseline: [0.0; CHANNELS],
            mvc_max: [0.0; CHANNELS],
        };
        for ch in 0..CHANNELS {
            let mut a: Vec<f64> = rs.iter().map(|v| v[ch]).collect();
            let mut b: Vec<f64> = ms.iter().map(|v| v[ch]).collect();
            cal.rest_baseline[ch] = median(&mut a);
            cal.mvc_max[ch] = percentile(&mut b, 95.0);
        }
        cal.validate(d)?;
        profile.set(d, cal);
        any = true;
    }
    if !any {
        return Err(Error::Calibration("no frames in calibration recordings".into()));
    }
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_emg, synth_session, Profile};
    use proptest::prelude::*;

    fn cal(rest: f64, mvc: f64) -> DeviceCalibration {
        DeviceCalibration {
            rest_baseline: [rest; CHANNELS],
            mvc_max: [mvc; CHANNELS],
        }
    }

    #[test]
    fn normalize_examples() {
        let c = cal(2.0, 42.0);
        assert_eq!(normalize(&[2.0; CHANNELS], &c), [0.0; CHANNELS]);
        assert_eq!(normalize(&[42.0; CHANNELS], &c), [1.0; CHANNELS]);
        let mid = 2.0 + 0.5 * 40.0;
        assert!((normalize(&[mid; CHANNELS], &c)[3] - 0.5).abs() < 1e-12);
        assert_eq!(normalize(&[500.0; CHANNELS], &c), [NORMALIZED_MAX; CHANNELS]);
    }

    #[test]
    fn synthetic_rest_and_macro_calibrate() {
        let rest = synth_session(Profile::Rest, 1, 5.0).unwrap();
        let mvc = synth_session(Profile::Macro, 2, 5.0).unwrap();
        let p = calibrate(&rest, &mvc, 50, 10).unwrap();
        for d in Device::ALL {
            let c = p.device(d).unwrap();
            for ch in 0..CHANNELS {
                assert!(c.mvc_max[ch] > c.rest_baseline[ch]);
            }
        }
    }

    #[test]
    fn weak_mvc_fails_naming_channel() {
        let rest = synth_emg(Profile::Meso, 3, 4.0).unwrap();
        let mvc = synth_emg(Profile::Rest, 3, 4.0).unwrap();
        let err = calibrate(&rest, &mvc, 50, 10).unwrap_err().to_string();
        assert!(err.contains("left_arm ch"), "{err}");
    }

    #[test]
    fn zero_rest_is_valid() {
        let rest: Vec<EmgFrame> = (0..700)
            .map(|i| EmgFrame::new(Device::LeftArm, i * 5000, [0; CHANNELS]))
            .collect();
        let mvc = synth_emg(Profile::Macro, 1, 4.0).unwrap();
        let p = calibrate(&rest, &mvc, 50, 10).unwrap();
        assert_eq!(p.left_arm.unwrap().rest_baseline, [0.0; CHANNELS]);
    }

    #[test]
    fn short_recording_rejected() {
        let s = synth_emg(Profile::Rest, 3, 2.0).unwrap();
        let m = synth_emg(Profile::Macro, 3, 4.0).unwrap();
        assert!(calibrate(&s, &m, 50, 10).is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let mut p = CalibrationProfile {
            created_unix: 1_700_000_000,
            ..Default::default()
        };
        p.set(Device::RightCalf, cal(0.5, 33.25));
        let back = CalibrationProfile::from_toml(&p.to_toml()).unwrap();
        assert_eq!(back, p);
        assert!(p.to_toml().contains("[right_calf]"));
        let bad = "created_unix = 0\n[left_arm]\nrest_baseline = [1,1,1,1,1,1,1,1]\nmvc_max = [1,1,1,1,1,1,1,1]\n";
        assert!(CalibrationProfile::from_toml(bad).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_monotonic(a in 0.0f64..200.0, b in 0.0f64..200.0, rest in 0.0f64..20.0, span in 0.1f64..100.0) {
            let c = cal(rest, rest + span);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let x = normalize(&[lo; CHANNELS], &c)[0];
            let y = normalize(&[hi; CHANNELS], &c)[0];
            prop_assert!(x <= y);
            prop_assert!((0.0..=NORMALIZED_MAX).contains(&x));
        }
    }
}
