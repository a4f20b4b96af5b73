//! Registered synthesis parameters: the destinations a mapping may target.

use std::ops::Range;

use serde::Serialize;

use super::ObjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub u16);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn spec(self) -> &'static ParamSpec {
        &PARAMS[self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub object: ObjectId,
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
    pub default: f64,
}

impl ParamSpec {
    pub fn address(&self) -> String {
        format!("{}/{}", self.object, self.name)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.min, self.max)
    }
}

const fn p(object: ObjectId, name: &'static str, min: f64, max: f64, default: f64) -> ParamSpec {
    ParamSpec {
        object,
        name,
        min,
        max,
        default,
    }
}

use ObjectId::*;

/// Grouped by object; each object's slice is in the order its parameter
/// struct's `from_values` expects.
pub static PARAMS: [ParamSpec; 28] = [
    p(Friction, "force", 0.0, 1.0, 0.0),
    p(Friction, "pressure", 0.0, 1.0, 0.5),
    p(Friction, "stiffness", 0.0, 1.0, 0.5),
    p(Friction, "dissipation", 0.0, 1.0, 0.3),
    p(Friction, "velocity", -1.0, 1.0, 0.0),
    p(Friction, "bandpass_fc", 80.0, 2500.0, 600.0),
    p(Bubble, "radius_m", 5e-4, 2e-2, 4e-3),
    p(Bubble, "rise", 0.0, 1.0, 0.2),
    p(Bubble, "amplitude", 0.0, 1.0, 0.5),
    p(Bubble, "trigger", 0.0, 1.0, 0.0),
    p(FluidFlow, "speed", 0.0, 1.0, 0.0),
    p(FluidFlow, "density", 0.0, 1.0, 0.0),
    p(FluidFlow, "radius_min", 5e-4, 2e-2, 1e-3),
    p(FluidFlow, "radius_max", 5e-4, 2e-2, 8e-3),
    p(FluidFlow, "scrub_amount", 0.0, 1.0, 0.0),
    p(Scraping, "force", 0.0, 1.0, 0.0),
    p(Scraping, "grain", 0.0, 1.0, 0.5),
    p(Scraping, "velocity", 0.0, 1.0, 0.0),
    p(Nonlinear, "carrier_hz", 40.0, 800.0, 110.0),
    p(Nonlinear, "index1", 0.0, 8.0, 0.0),
    p(Nonlinear, "index2", 0.0, 8.0, 0.0),
    p(Nonlinear, "index3", 0.0, 8.0, 0.0),
    p(Nonlinear, "drive", 1.0, 10.0, 1.0),
    p(Nonlinear, "rm_hz", 0.0, 400.0, 0.0),
    p(Nonlinear, "amplitude", 0.0, 1.0, 0.0),
    p(Breath, "rt60_s", 0.2, 6.0, 2.0),
    p(Breath, "feedback", 0.0, 0.95, 0.0),
    p(Breath, "mix", 0.0, 1.0, 0.5),
];

/// Look up `object/name`.
pub fn param_id(address: &str) -> Option<ParamId> {
    let (obj, name) = address.split_once('/')?;
    PARAMS
        .iter()
        .position(|s| s.object.as_str() == obj && s.name == name)
        .map(|i| ParamId(i as u16))
}

pub fn param_spec(address: &str) -> Option<&'static ParamSpec> {
    param_id(address).map(ParamId::spec)
}

/// Index range of an object's parameters in [`PARAMS`].
pub fn params_of(object: ObjectId) -> Range<usize> {
    let start = PARAMS.iter().position(|s| s.object == object).unwrap_or(0);
    let len = PARAMS.iter().filter(|s| s.object == object).count();
    start..start + len
}
