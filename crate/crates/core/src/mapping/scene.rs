//! Scenes: named bundles of active objects, a mapping matrix, base
//! parameter values and a mixer snapshot.
//!
//! Three presets ship with the engine (`breath`, `standstill`,
//! `musicking`). Config `[[scene]]` tables with a preset's name replace it;
//! other names are appended.
//!
//! Which electrodes pick up which action is a property of how the armbands
//! sit on the body, so the presets assume a layout: on the forearm,
//! channels 1-3 over the finger flexors, 4 over the adductors, 5-6 over the
//! wrist extensors and 7 over the abductors; on the calf, channels 1-4 over
//! the gastrocnemius and 5-8 over the tibialis. Override the edges in
//! config to match a different placement.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{curve_from, Edge, MappingMatrix, PARAM_COUNT};
use crate::control::Registry;
use crate::error::{Error, Result};
use crate::mixer::{MixerState, StripState};
use crate::synth::{param_id, ObjectId, DEFAULT_RATIOS, PARAMS};

pub const DEFAULT_CROSSFADE_S: f64 = 2.0;

fn default_crossfade() -> f64 {
    DEFAULT_CROSSFADE_S
}

fn default_weight() -> f64 {
    1.0
}

fn default_curve() -> String {
    "linear".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub source: String,
    pub destination: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_curve")]
    pub curve: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    /// Defaults to the destination's full range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripConfig {
    pub object: String,
    #[serde(default)]
    pub gain_db: f64,
    #[serde(default)]
    pub pan: f64,
    #[serde(default)]
    pub send_breath: f64,
    #[serde(default)]
    pub mute: bool,
}

impl StripConfig {
    pub fn state(&self) -> StripState {
        StripState {
            gain_db: self.gain_db,
            pan: self.pan,
            send_breath: self.send_breath,
            mute: self.mute,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    #[serde(default)]
    pub objects: Vec<String>,
    #[serde(default = "default_crossfade")]
    pub crossfade_s: f64,
    #[serde(default)]
    pub master_gain_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinear_ratios: Option<[f64; 3]>,
    /// Base values for destinations, keyed `object/param`.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, rename = "strip")]
    pub strips: Vec<StripConfig>,
    #[serde(default, rename = "edge")]
    pub edges: Vec<EdgeConfig>,
}

/// `[[cue]]`: switch to `scene` at `at_s` seconds into an offline render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cue {
    pub at_s: f64,
    pub scene: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub active: [bool; ObjectId::COUNT],
    pub matrix: MappingMatrix,
    pub mixer: MixerState,
    pub crossfade_s: f64,
    /// Values for destinations no edge drives.
    pub base: [f64; PARAM_COUNT],
    pub nonlinear_ratios: [f64; 3],
}

impl Scene {
    pub fn objects(&self) -> Vec<ObjectId> {
        ObjectId::ALL.into_iter().filter(|o| self.active[o.index()]).collect()
    }

    pub fn is_active(&self, o: ObjectId) -> bool {
        self.active[o.index()]
    }

    /// Compile and validate a scene table. Error paths look like
    /// `scene[musicking].edge[2].destination`.
    pub fn compile(cfg: &SceneConfig) -> Result<Scene> {
        let at = format!("scene[{}]", cfg.name);
        if cfg.name.is_empty() {
            return Err(Error::config("scene[].name", "must not be empty"));
        }
        if !(cfg.crossfade_s >= 0.0 && cfg.crossfade_s.is_finite()) {
            return Err(Error::config(format!("{at}.crossfade_s"), "must be a finite value >= 0"));
        }
        let mut active = [false; ObjectId::COUNT];
        for (i, o) in cfg.objects.iter().enumerate() {
            let o: ObjectId = o.parse().map_err(|e: String| Error::config(format!("{at}.objects[{i}]"), e))?;
            active[o.index()] = true;
        }

        let mut mixer = MixerState {
            master_gain_db: cfg.master_gain_db,
            ..Default::default()
        };
        let mut seen = HashSet::new();
        for (i, s) in cfg.strips.iter().enumerate() {
            let sat = format!("{at}.strip[{i}]");
            let o: ObjectId = s.object.parse().map_err(|e: String| Error::config(format!("{sat}.object"), e))?;
            if !seen.insert(o) {
                return Err(Error::config(format!("{sat}.object"), format!("duplicate strip '{o}'")));
            }
            *mixer.strip_mut(o) = s.state();
        }
        let clamped = mixer.clamped();
        if clamped != mixer {
            log::warn!("{at}: mixer values clamped into range");
        }

        let mut base = [0.0; PARAM_COUNT];
        for (i, s) in PARAMS.iter().enumerate() {
            base[i] = s.default;
        }
        for (addr, &v) in &cfg.params {
            let id = param_id(addr)
                .ok_or_else(|| Error::config(format!("{at}.params.\"{addr}\""), "unknown parameter"))?;
            let spec = id.spec();
            if !(v >= spec.min && v <= spec.max) {
                return Err(Error::config(
                    format!("{at}.params.\"{addr}\""),
                    format!("{v} outside [{}, {}]", spec.min, spec.max),
                ));
            }
            base[id.index()] = v;
        }

        let ratios = cfg.nonlinear_ratios.unwrap_or(DEFAULT_RATIOS);
        if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::config(format!("{at}.nonlinear_ratios"), "ratios must be > 0"));
        }

        let mut edges = Vec::with_capacity(cfg.edges.len());
        for (i, e) in cfg.edges.iter().enumerate() {
            let eat = format!("{at}.edge[{i}]");
            let source = e
                .source
                .parse()
                .map_err(|m: String| Error::config(format!("{eat}.source"), m))?;
            let destination = param_id(&e.destination).ok_or_else(|| {
                Error::config(
                    format!("{eat}.destination"),
                    format!("'{}' is not a registered parameter", e.destination),
                )
            })?;
            if !(-1.0..=1.0).contains(&e.weight) {
                return Err(Error::config(format!("{eat}.weight"), format!("{} outside [-1, 1]", e.weight)));
            }
            let curve = curve_from(&e.curve, e.exponent, &eat)?;
            let spec = destination.spec();
            let out_range = match e.out_range {
                Some([lo, hi]) if lo.is_finite() && hi.is_finite() => (lo, hi),
                Some(_) => return Err(Error::config(format!("{eat}.out_range"), "bounds must be finite")),
                None => (spec.min, spec.max),
            };
            edges.push(Edge {
                id: e.id.clone().unwrap_or_else(|| format!("{}.{i}", cfg.name)),
                source,
                destination,
                weight: e.weight,
                curve,
                out_range,
            });
        }

        Ok(Scene {
            name: cfg.name.clone(),
            active,
            matrix: MappingMatrix::new(edges),
            mixer: clamped,
            crossfade_s: cfg.crossfade_s,
            base,
            nonlinear_ratios: ratios,
        })
    }
}

/// The validated set of scenes available to an engine.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSet {
    pub scenes: Vec<Scene>,
}

impl SceneSet {
    /// Presets overlaid with `configs` (same name replaces, new names append).
    pub fn build(configs: &[SceneConfig]) -> Result<Self> {
        let mut merged = presets();
        let mut names = HashSet::new();
        for c in configs {
            if !names.insert(c.name.as_str()) {
                return Err(Error::config(format!("scene[{}]", c.name), "duplicate scene name"));
            }
            match merged.iter_mut().find(|p| p.name == c.name) {
                Some(slot) => *slot = c.clone(),
                None => merged.push(c.clone()),
            }
        }
        let scenes = merged.iter().map(Scene::compile).collect::<Result<Vec<_>>>()?;
        if scenes.len() > u8::MAX as usize {
            return Err(Error::config("scene", "too many scenes"));
        }
        let mut ids = HashSet::new();
        for s in &scenes {
            for (i, e) in s.matrix.edges.iter().enumerate() {
                if !ids.insert(e.id.as_str()) {
                    return Err(Error::config(
                        format!("scene[{}].edge[{i}].id", s.name),
                        format!("edge id '{}' is not unique", e.id),
                    ));
                }
            }
        }
        Ok(Self { scenes })
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.scenes.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.name == name)
    }

    pub fn registry(&self) -> Registry {
        Registry {
            scenes: self.scenes.iter().map(|s| s.name.clone()).collect(),
            edges: self
                .scenes
                .iter()
                .enumerate()
                .flat_map(|(si, s)| {
                    s.matrix
                        .edges
                        .iter()
                        .enumerate()
                        .map(move |(ei, e)| (e.id.clone(), si as u8, ei as u16))
                })
                .collect(),
        }
    }
}

fn edge(id: &str, source: &str, destination: &str, weight: f64, exponent: Option<f64>, out_range: [f64; 2]) -> EdgeConfig {
    EdgeConfig {
        id: Some(id.to_owned()),
        source: source.to_owned(),
        destination: destination.to_owned(),
        weight,
        curve: if exponent.is_some() { "exp" } else { "linear" }.to_owned(),
        exponent,
        out_range: Some(out_range),
    }
}

fn strip(object: &str, gain_db: f64, pan: f64, send_breath: f64) -> StripConfig {
    StripConfig {
        object: object.to_owned(),
        gain_db,
        pan,
        send_breath,
        mute: false,
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// The shipped scenes, in performance order.
pub fn presets() -> Vec<SceneConfig> {
    let breath = SceneConfig {
        name: "breath".into(),
        objects: vec!["breath".into()],
        crossfade_s: DEFAULT_CROSSFADE_S,
        master_gain_db: 0.0,
        nonlinear_ratios: None,
        params: params(&[("breath/rt60_s", 3.0), ("breath/feedback", 0.5), ("breath/mix", 0.6)]),
        strips: vec![strip("breath", 0.0, 0.0, 1.0)],
        // Movement opens the feedback network; the musician rides the rest.
        edges: vec![edge("breath.sway", "right_calf/agg", "breath/feedback", 1.0, Some(0.5), [0.4, 0.9])],
    };

    // "Planting deeply": calf micro-activity pressing a low, slow friction.
    let standstill = SceneConfig {
        name: "standstill".into(),
        objects: vec!["friction".into(), "breath".into()],
        crossfade_s: DEFAULT_CROSSFADE_S,
        master_gain_db: 0.0,
        nonlinear_ratios: None,
        params: params(&[
            ("friction/stiffness", 0.3),
            ("friction/dissipation", 0.2),
            ("breath/rt60_s", 4.0),
            ("breath/feedback", 0.3),
            ("breath/mix", 0.5),
        ]),
        strips: vec![
            strip("friction", 0.0, -0.2, 0.3),
            strip("breath", -6.0, 0.0, 1.0),
        ],
        edges: vec![
            edge("standstill.plant_force", "right_calf/agg", "friction/force", 1.0, Some(0.5), [0.0, 1.0]),
            edge("standstill.plant_pressure", "right_calf/env1", "friction/pressure", 1.0, Some(0.5), [0.2, 1.0]),
            edge("standstill.plant_velocity", "right_calf/env5", "friction/velocity", 1.0, Some(0.5), [0.0, 0.3]),
            edge("standstill.plant_still", "right_calf/level/micro", "friction/dissipation", 0.5, None, [0.0, 1.0]),
            edge("standstill.plant_fc", "right_calf/mav2", "friction/bandpass_fc", 1.0, None, [80.0, 400.0]),
        ],
    };

    let musicking = SceneConfig {
        name: "musicking".into(),
        objects: ["friction", "bubble", "fluidflow", "scraping", "nonlinear", "breath"]
            .map(String::from)
            .to_vec(),
        crossfade_s: DEFAULT_CROSSFADE_S,
        master_gain_db: -6.0,
        nonlinear_ratios: Some(DEFAULT_RATIOS),
        params: params(&[
            ("fluidflow/radius_min", 1e-3),
            ("breath/rt60_s", 2.0),
            ("breath/feedback", 0.2),
            ("breath/mix", 0.4),
        ]),
        strips: vec![
            strip("friction", 0.0, -0.5, 0.2),
            strip("bubble", -3.0, 0.3, 0.3),
            strip("fluidflow", 0.0, 0.4, 0.2),
            strip("scraping", -3.0, -0.3, 0.1),
            strip("nonlinear", -6.0, 0.0, 0.2),
            strip("breath", -6.0, 0.0, 1.0),
        ],
        edges: vec![
            // Walking -> friction, "squeaking".
            edge("musicking.walk_force", "right_calf/mav1", "friction/force", 0.5, None, [0.0, 1.0]),
            edge("musicking.walk_force2", "right_calf/mav2", "friction/force", 0.5, None, [0.0, 1.0]),
            edge("musicking.walk_pressure", "right_calf/mav3", "friction/pressure", 1.0, None, [0.2, 1.0]),
            edge("musicking.walk_stiffness", "right_calf/mav4", "friction/stiffness", 1.0, None, [0.2, 1.0]),
            edge("musicking.walk_dissipation", "right_calf/mav6", "friction/dissipation", 1.0, None, [0.1, 0.6]),
            edge("musicking.walk_velocity", "right_calf/agg", "friction/velocity", 1.0, None, [0.0, 1.0]),
            edge("musicking.walk_squeak", "right_calf/mav5", "friction/bandpass_fc", 1.0, Some(2.0), [600.0, 2500.0]),
            // Finger flexion -> fluidflow, "squeezing a wet sponge".
            edge("musicking.flex_density", "left_arm/mav1", "fluidflow/density", 0.5, None, [0.0, 1.0]),
            edge("musicking.flex_density2", "left_arm/mav2", "fluidflow/density", 0.5, None, [0.0, 1.0]),
            edge("musicking.flex_speed", "left_arm/mav3", "fluidflow/speed", 1.0, None, [0.0, 1.0]),
            // Wrist extension -> fluidflow radii and scrub, "casting a fishing line".
            edge("musicking.extend_radius", "left_arm/mav5", "fluidflow/radius_max", 1.0, Some(2.0), [3e-3, 1.5e-2]),
            edge("musicking.extend_scrub", "left_arm/mav6", "fluidflow/scrub_amount", 1.0, None, [0.0, 1.0]),
            // Abduction / adduction -> scraping, "expanding" / "to deflate".
            edge("musicking.abduct_force", "left_arm/mav7", "scraping/force", 1.0, None, [0.0, 1.0]),
            edge("musicking.abduct_velocity", "left_arm/mav7", "scraping/velocity", 1.0, Some(0.5), [0.0, 1.0]),
            edge("musicking.adduct_grain", "left_arm/mav4", "scraping/grain", 1.0, None, [0.0, 1.0]),
            // Various -> waveshaping: aggregate activity of both devices.
            edge("musicking.shape_carrier", "left_arm/agg", "nonlinear/carrier_hz", 1.0, Some(2.0), [55.0, 440.0]),
            edge("musicking.shape_index1", "left_arm/agg", "nonlinear/index1", 1.0, Some(2.0), [0.0, 6.0]),
            edge("musicking.shape_index2", "right_calf/agg", "nonlinear/index2", 1.0, Some(2.0), [0.0, 5.0]),
            edge("musicking.shape_index3", "left_arm/env8", "nonlinear/index3", 0.5, Some(3.0), [0.0, 8.0]),
            edge("musicking.shape_index3b", "right_calf/env8", "nonlinear/index3", 0.5, Some(3.0), [0.0, 8.0]),
            edge("musicking.shape_drive", "right_calf/agg", "nonlinear/drive", 1.0, Some(2.0), [1.0, 8.0]),
            edge("musicking.shape_level", "left_arm/agg", "nonlinear/amplitude", 0.5, None, [0.0, 0.8]),
            edge("musicking.shape_level2", "right_calf/agg", "nonlinear/amplitude", 0.5, None, [0.0, 0.8]),
            edge("musicking.shape_ring", "left_arm/env4", "nonlinear/rm_hz", 1.0, Some(3.0), [0.0, 120.0]),
            // Large actions punctuate with single bubbles.
            edge("musicking.macro_bubble", "left_arm/level/macro", "bubble/trigger", 1.0, None, [0.0, 1.0]),
            edge("musicking.macro_radius", "left_arm/env1", "bubble/radius_m", 1.0, None, [1.2e-2, 2e-3]),
        ],
    };

    vec![breath, standstill, musicking]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_compile() {
        let set = SceneSet::build(&[]).unwrap();
        let names: Vec<&str> = set.scenes.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["breath", "standstill", "musicking"]);
        let m = set.get("musicking").unwrap();
        assert!(m.objects().len() == 6);
        assert!(!m.matrix.edges.is_empty());
        let reg = set.registry();
        assert_eq!(reg.scene_index("musicking"), Some(2));
    }

    #[test]
    fn config_scene_replaces_preset_and_appends() {
        let text = r#"
            [[scene]]
            name = "breath"
            objects = ["breath"]
            crossfade_s = 4.0

            [[scene]]
            name = "coda"
            objects = ["nonlinear"]
            [scene.params]
            "nonlinear/carrier_hz" = 220.0
            [[scene.strip]]
            object = "nonlinear"
            gain_db = -12.0
            [[scene.edge]]
            source = "left_arm/agg"
            destination = "nonlinear/index1"
            curve = "exp"
            exponent = 2.0
        "#;
        #[derive(Deserialize)]
        struct Doc {
            scene: Vec<SceneConfig>,
        }
        let doc: Doc = toml::from_str(text).unwrap();
        let set = SceneSet::build(&doc.scene).unwrap();
        assert_eq!(set.get("breath").unwrap().crossfade_s, 4.0);
        let coda = set.get("coda").unwrap();
        assert_eq!(coda.matrix.edges[0].id, "coda.0");
        assert_eq!(coda.matrix.edges[0].out_range, (0.0, 8.0));
        assert_eq!(coda.mixer.strip(ObjectId::Nonlinear).gain_db, -12.0);
    }

    #[test]
    fn validation_errors_are_path_qualified() {
        let mut c = presets().remove(2);
        c.edges[2].destination = "friction/colour".into();
        let err = Scene::compile(&c).unwrap_err().to_string();
        assert!(err.contains("scene[musicking].edge[2].destination"), "{err}");

        let mut c = presets().remove(0);
        c.edges[0].curve = "exp".into();
        c.edges[0].exponent = Some(0.0);
        let err = Scene::compile(&c).unwrap_err().to_string();
        assert!(err.contains("scene[breath].edge[0].exponent"), "{err}");

        let mut c = presets().remove(0);
        c.objects.push("theremin".into());
        assert!(Scene::compile(&c).unwrap_err().to_string().contains("scene[breath].objects[1]"));
    }

    #[test]
    fn duplicate_edge_ids_rejected() {
        let mut a = presets().remove(0);
        a.name = "copy".into();
        assert!(SceneSet::build(&[a]).is_err());
    }
}
