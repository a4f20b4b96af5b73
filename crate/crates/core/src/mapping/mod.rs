//! Many-to-many routing from feature sources to synthesis parameters.
//!
//! Each edge reads one feature source, clamps it to [0, 1], shapes it with a
//! linear or power curve into its `out_range`, and scales it by `weight`.
//! Edges into the same destination are summed and the sum is clamped to the
//! destination's registered range.

mod scene;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use scene::{presets, Cue, EdgeConfig, Scene, SceneConfig, SceneSet, StripConfig, DEFAULT_CROSSFADE_S};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Level};
use crate::ingest::{Device, CHANNELS};
use crate::synth::{ParamId, PARAMS};

pub const PARAM_COUNT: usize = PARAMS.len();

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    Linear,
    /// `x^k`, `k > 0`.
    Exponential(f64),
}

/// Map `x` (clamped to [0, 1]) through `curve` into `[min, max]`.
pub fn apply_curve(x: f64, curve: Curve, out_range: (f64, f64)) -> f64 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let (lo, hi) = out_range;
    let shaped = match curve {
        Curve::Linear => x,
        Curve::Exponential(k) => x.powf(k),
    };
    lo + shaped * (hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// Normalized MAV of one channel (0-based).
    Mav(u8),
    Aggregate,
    /// One-hot: 1 when the device is at this level.
    Level(Level),
    /// Smoothed envelope of one channel (0-based).
    Envelope(u8),
}

/// A feature address such as `right_calf/mav3`, `left_arm/agg`,
/// `left_arm/level/macro` or `right_calf/env1` (channels are 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Source {
    pub device: Device,
    pub kind: SourceKind,
}

impl Source {
    pub fn value(&self, fv: &FeatureVector) -> f64 {
        match self.kind {
            SourceKind::Mav(ch) => fv.mav_per_channel[ch as usize],
            SourceKind::Aggregate => fv.mav_aggregate,
            SourceKind::Level(l) => {
                if fv.level == l {
                    1.0
                } else {
                    0.0
                }
            }
            SourceKind::Envelope(ch) => fv.envelope[ch as usize],
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SourceKind::Mav(ch) => write!(f, "{}/mav{}", self.device, ch + 1),
            SourceKind::Aggregate => write!(f, "{}/agg", self.device),
            SourceKind::Level(l) => write!(f, "{}/level/{l}", self.device),
            SourceKind::Envelope(ch) => write!(f, "{}/env{}", self.device, ch + 1),
        }
    }
}

fn channel(s: &str) -> Option<u8> {
    let n: usize = s.parse().ok()?;
    (1..=CHANNELS).contains(&n).then(|| (n - 1) as u8)
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("unknown feature source '{s}'");
        let mut parts = s.split('/');
        let device: Device = parts.next().unwrap_or("").parse()?;
        let kind = match (parts.next(), parts.next(), parts.next()) {
            (Some("agg"), None, None) => SourceKind::Aggregate,
            (Some("level"), Some(l), None) => SourceKind::Level(l.parse()?),
            (Some(k), None, None) if k.starts_with("mav") => SourceKind::Mav(channel(&k[3..]).ok_or_else(bad)?),
            (Some(k), None, None) if k.starts_with("env") => SourceKind::Envelope(channel(&k[3..]).ok_or_else(bad)?),
            _ => return Err(bad()),
        };
        Ok(Source { device, kind })
    }
}

/// A compiled routing edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub source: Source,
    pub destination: ParamId,
    pub weight: f64,
    pub curve: Curve,
    pub out_range: (f64, f64),
}

impl Edge {
    #[inline]
    pub fn contribution(&self, x: f64) -> f64 {
        self.weight * apply_curve(x, self.curve, self.out_range)
    }
}

/// Per-destination results of one mapping pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestValues {
    pub values: [f64; PARAM_COUNT],
    pub mapped: [bool; PARAM_COUNT],
}

impl Default for DestValues {
    fn default() -> Self {
        Self {
            values: [0.0; PARAM_COUNT],
            mapped: [false; PARAM_COUNT],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MappingMatrix {
    pub edges: Vec<Edge>,
}

impl MappingMatrix {
    pub fn new(edges: Vec<Edge>) -> Self {
        Self { edges }
    }

    /// Evaluate with the latest vector of each device. Edges whose device
    /// has produced no features yet contribute nothing. Allocation-free.
    pub fn evaluate(&self, latest: &[Option<FeatureVector>; 2], out: &mut DestValues) {
        out.values = [0.0; PARAM_COUNT];
        out.mapped = [false; PARAM_COUNT];
        for e in &self.edges {
            let Some(fv) = latest[e.source.device.index()].as_ref() else {
                continue;
            };
            let d = e.destination.index();
            out.values[d] += e.contribution(e.source.value(fv));
            out.mapped[d] = true;
        }
        for (d, spec) in PARAMS.iter().enumerate() {
            if out.mapped[d] {
                out.values[d] = spec.clamp(out.values[d]);
            }
        }
    }

    /// Map a single feature vector: only edges reading `fv.device` take
    /// part. Destinations are listed in schema order.
    pub fn map_features(&self, fv: &FeatureVector) -> Vec<(ParamId, f64)> {
        let mut latest = [None, None];
        latest[fv.device.index()] = Some(*fv);
        let mut out = DestValues::default();
        self.evaluate(&latest, &mut out);
        (0..PARAM_COUNT)
            .filter(|&d| out.mapped[d])
            .map(|d| (ParamId(d as u16), out.values[d]))
            .collect()
    }
}

/// Validate a curve specification from config.
pub fn curve_from(name: &str, exponent: Option<f64>, at: &str) -> Result<Curve> {
    match name {
        "linear" => Ok(Curve::Linear),
        "exp" | "exponential" => {
            let k = exponent.ok_or_else(|| Error::config(format!("{at}.exponent"), "required for exponential curves"))?;
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::config(format!("{at}.exponent"), format!("must be > 0, got {k}")));
            }
            Ok(Curve::Exponential(k))
        }
        other => Err(Error::config(format!("{at}.curve"), format!("unknown curve '{other}'"))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeSummary {
    pub id: String,
    pub source: String,
    pub destination: String,
    pub weight: f64,
}

impl From<&Edge> for EdgeSummary {
    fn from(e: &Edge) -> Self {
        Self {
            id: e.id.clone(),
            source: e.source.to_string(),
            destination: e.destination.spec().address(),
            weight: e.weight,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::param_id;
    use proptest::prelude::*;

    fn fv(device: Device, mav: [f64; CHANNELS], level: Level) -> FeatureVector {
        FeatureVector {
            device,
            timestamp_us: 0,
            mav_raw: mav,
            mav_per_channel: mav,
            mav_aggregate: mav.iter().sum::<f64>() / CHANNELS as f64,
            level,
            envelope: mav,
            overshoot: false,
        }
    }

    fn edge(src: &str, dst: &str, weight: f64, curve: Curve, range: (f64, f64)) -> Edge {
        Edge {
            id: format!("{src}>{dst}"),
            source: src.parse().unwrap(),
            destination: param_id(dst).unwrap(),
            weight,
            curve,
            out_range: range,
        }
    }

    #[test]
    fn curve_examples() {
        assert_eq!(apply_curve(0.0, Curve::Exponential(3.0), (80.0, 2500.0)), 80.0);
        assert_eq!(apply_curve(0.0, Curve::Linear, (80.0, 2500.0)), 80.0);
        assert_eq!(apply_curve(1.0, Curve::Exponential(2.0), (80.0, 2500.0)), 2500.0);
        assert!((apply_curve(0.5, Curve::Exponential(2.0), (0.0, 8.0)) - 2.0).abs() < 1e-12);
        assert!(curve_from("exp", Some(0.0), "e").is_err());
        assert!(curve_from("exp", Some(-1.0), "e").is_err());
    }

    #[test]
    fn source_parsing() {
        for s in ["right_calf/mav3", "left_arm/agg", "left_arm/level/macro", "right_calf/env8"] {
            assert_eq!(s.parse::<Source>().unwrap().to_string(), s);
        }
        for s in ["left_arm/mav0", "left_arm/mav9", "torso/agg", "left_arm/level/huge", "left_arm"] {
            assert!(s.parse::<Source>().is_err(), "{s}");
        }
    }

    #[test]
    fn map_examples() {
        let v = fv(Device::LeftArm, [0.3, 0.4, 0.8, 0.0, 0.0, 0.0, 0.0, 0.0], Level::Meso);
        assert!(MappingMatrix::default().map_features(&v).is_empty());

        let m = MappingMatrix::new(vec![edge("left_arm/mav1", "scraping/force", 1.0, Curve::Linear, (0.0, 1.0))]);
        let got = m.map_features(&v);
        assert_eq!(got.len(), 1);
        assert!((got[0].1 - 0.3).abs() < 1e-12);

        let m = MappingMatrix::new(vec![
            edge("left_arm/mav2", "scraping/force", 0.5, Curve::Linear, (0.0, 1.0)),
            edge("left_arm/mav3", "scraping/force", 0.5, Curve::Linear, (0.0, 1.0)),
        ]);
        assert!((m.map_features(&v)[0].1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn level_sources_are_one_hot() {
        let m = MappingMatrix::new(vec![
            edge("left_arm/level/micro", "scraping/force", 1.0, Curve::Linear, (0.0, 1.0)),
            edge("left_arm/level/macro", "scraping/grain", 1.0, Curve::Linear, (0.0, 1.0)),
        ]);
        let got = m.map_features(&fv(Device::LeftArm, [0.0; CHANNELS], Level::Micro));
        assert_eq!(got.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1.0, 0.0]);
    }

    #[test]
    fn missing_device_contributes_nothing() {
        let m = MappingMatrix::new(vec![edge("right_calf/agg", "friction/force", 1.0, Curve::Linear, (0.0, 1.0))]);
        let got = m.map_features(&fv(Device::LeftArm, [1.0; CHANNELS], Level::Macro));
        assert!(got.is_empty());
    }

    proptest! {
        #[test]
        fn outputs_within_destination_range(
            xs in proptest::array::uniform8(0.0f64..=1.5),
            w1 in -1.0f64..=1.0,
            w2 in -1.0f64..=1.0,
            k in 0.1f64..5.0,
        ) {
            let m = MappingMatrix::new(vec![
                edge("left_arm/mav1", "friction/bandpass_fc", w1, Curve::Exponential(k), (80.0, 2500.0)),
                edge("left_arm/agg", "friction/bandpass_fc", w2, Curve::Linear, (0.0, 5000.0)),
                edge("left_arm/env2", "friction/velocity", w1, Curve::Linear, (-1.0, 1.0)),
            ]);
            let v = fv(Device::LeftArm, xs, Level::Meso);
            let a = m.map_features(&v);
            prop_assert_eq!(&a, &m.map_features(&v));
            for (p, val) in a {
                let s = p.spec();
                prop_assert!(val >= s.min && val <= s.max);
            }
        }
    }
}
