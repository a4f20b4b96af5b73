//! Sound objects and the breath effect chain.
//!
//! Every object is a single-owner state machine: control targets arrive
//! once per block through [`SoundObject::set_targets`] and are interpolated
//! linearly across the next [`SoundObject::process`] call. Nothing in the
//! processing path allocates.

mod breath_chain;
mod bubble;
pub mod filters;
mod fluidflow;
mod friction;
mod nonlinear;
mod schema;
mod scraping;
mod scrub;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use breath_chain::{BreathChain, BreathChainParams, COMB_DELAYS_MS, NETWORK_DELAYS_MS};
pub use bubble::{bubble_render, Bubble, BubbleParams, BubbleVoice};
pub use fluidflow::{FluidFlow, FluidFlowParams};
pub use friction::{Friction, FrictionParams};
pub use nonlinear::{Nonlinear, NonlinearParams, DEFAULT_RATIOS};
pub use schema::{param_id, param_spec, params_of, ParamId, ParamSpec, PARAMS};
pub use scraping::{Scraping, ScrapingParams};
pub use scrub::ScrubDelay;

/// The sound objects known to the engine, in mixer-strip order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectId {
    Friction,
    Bubble,
    #[serde(rename = "fluidflow")]
    FluidFlow,
    Scraping,
    Nonlinear,
    /// The breath microphone strip; its parameters drive the breath chain.
    Breath,
}

impl ObjectId {
    pub const ALL: [ObjectId; 6] = [
        ObjectId::Friction,
        ObjectId::Bubble,
        ObjectId::FluidFlow,
        ObjectId::Scraping,
        ObjectId::Nonlinear,
        ObjectId::Breath,
    ];
    pub const COUNT: usize = 6;

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectId::Friction => "friction",
            ObjectId::Bubble => "bubble",
            ObjectId::FluidFlow => "fluidflow",
            ObjectId::Scraping => "scraping",
            ObjectId::Nonlinear => "nonlinear",
            ObjectId::Breath => "breath",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectId::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown sound object '{s}'"))
    }
}

/// Stable per-purpose seed: FNV-1a over `tag`, mixed with `base` by splitmix64.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sample linear interpolation of `N` control values over one block.
#[derive(Debug, Clone, Copy)]
pub struct RampBank<const N: usize> {
    current: [f64; N],
    target: [f64; N],
    step: [f64; N],
    remaining: usize,
}

impl<const N: usize> RampBank<N> {
    pub fn new(initial: [f64; N]) -> Self {
        Self {
            current: initial,
            target: initial,
            step: [0.0; N],
            remaining: 0,
        }
    }

    /// Ramp from the current values to `target` over `len` samples.
    pub fn set_target(&mut self, target: [f64; N], len: usize) {
        self.target = target;
        if len == 0 {
            self.current = target;
            self.remaining = 0;
            return;
        }
        for i in 0..N {
            self.step[i] = (target[i] - self.current[i]) / len as f64;
        }
        self.remaining = len;
    }

    pub fn snap(&mut self, values: [f64; N]) {
        self.current = values;
        self.target = values;
        self.remaining = 0;
    }

    /// Values for the current sample; advances the ramp.
    #[inline]
    pub fn tick(&mut self) -> [f64; N] {
        let out = self.current;
        if self.remaining > 0 {
            self.remaining -= 1;
            if self.remaining == 0 {
                self.current = self.target;
            } else {
                for i in 0..N {
                    self.current[i] += self.step[i];
                }
            }
        }
        out
    }

    pub fn current(&self) -> [f64; N] {
        self.current
    }

    pub fn target(&self) -> [f64; N] {
        self.target
    }
}

/// Phase accumulator in [0, 1).
#[derive(Debug, Clone, Copy, Default)]
pub struct Phasor {
    pub phase: f64,
}

impl Phasor {
    /// Current phase, then advance by `inc` cycles.
    #[inline]
    pub fn next(&mut self, inc: f64) -> f64 {
        let p = self.phase;
        self.phase += inc;
        self.phase -= self.phase.floor();
        p
    }

    #[inline]
    pub fn sin(&mut self, inc: f64) -> f64 {
        (std::f64::consts::TAU * self.next(inc)).sin()
    }
}

/// Common interface the engine uses to drive mono sound objects.
pub trait SoundObject: Send {
    fn id(&self) -> ObjectId;

    /// Block-end targets for this object's parameters, in schema order.
    fn set_targets(&mut self, values: &[f64]);

    /// Render one block, interpolating parameters across it.
    fn process(&mut self, out: &mut [f32]);

    /// Clear all internal state (voices, filters, delay lines).
    fn reset(&mut self);

    /// Number of internal faults (NaN/overflow resets) since the last call.
    fn take_faults(&mut self) -> u32 {
        0
    }
}

/// Amplitude that counts as silent (-120 dBFS).
pub const SILENCE: f64 = 1e-6;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_reaches_target_with_bounded_steps() {
        let mut r = RampBank::new([0.0, 10.0]);
        r.set_target([1.0, 0.0], 4);
        let v: Vec<[f64; 2]> = (0..5).map(|_| r.tick()).collect();
        assert_eq!(v[0], [0.0, 10.0]);
        assert_eq!(v[4], [1.0, 0.0]);
        for w in v.windows(2) {
            assert!((w[1][0] - w[0][0]).abs() <= 0.25 + 1e-12);
            assert!((w[1][1] - w[0][1]).abs() <= 2.5 + 1e-12);
        }
    }

    #[test]
    fn seeds_differ_by_tag_and_base() {
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
        assert_eq!(derive_seed(7, "fluidflow"), derive_seed(7, "fluidflow"));
    }

    #[test]
    fn phasor_wraps() {
        let mut p = Phasor::default();
        for _ in 0..10 {
            p.next(0.37);
        }
        assert!((0.0..1.0).contains(&p.phase));
        assert!((p.phase - 0.7).abs() < 1e-9);
    }

    #[test]
    fn object_names_roundtrip() {
        for o in ObjectId::ALL {
            assert_eq!(o.as_str().parse::<ObjectId>().unwrap(), o);
        }
    }
}
