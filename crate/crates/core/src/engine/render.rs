//! Deterministic offline rendering to a 32-bit float stereo WAV plus a JSON
//! report next to it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::{Engine, EngineConfig};
use crate::error::{Error, Result};
use crate::features::CalibrationProfile;
use crate::ingest::EmgFrame;

/// Everything a render consumes besides the config.
#[derive(Debug, Clone, Default)]
pub struct RenderInputs {
    pub frames: Vec<EmgFrame>,
    /// Breath signal at the engine rate.
    pub breath: Option<Vec<f32>>,
    pub profile: CalibrationProfile,
    /// Fixed length; defaults to the inputs' length plus `tail_s`.
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneChange {
    pub at_s: f64,
    pub scene: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderReport {
    pub wav: PathBuf,
    pub sample_rate: u32,
    pub block_size: usize,
    pub seed: u64,
    pub blocks: u64,
    pub duration_s: f64,
    pub frames: usize,
    pub scene_timeline: Vec<SceneChange>,
    pub faults: u64,
    pub peak: f64,
    pub peak_dbfs: f64,
    pub wall_time_s: f64,
    pub real_time_factor: f64,
    pub warnings: Vec<String>,
}

impl RenderReport {
    pub fn report_path(wav: &Path) -> PathBuf {
        let mut s = wav.as_os_str().to_owned();
        s.push(".report.json");
        PathBuf::from(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Render `inputs` through a fresh engine into `out` (WAV) and
/// `<out>.report.json`. Faults do not abort the render; they are counted
/// in the report and callers turn them into a nonzero exit status.
pub fn render_offline(cfg: &EngineConfig, inputs: &RenderInputs, out: &Path) -> Result<RenderReport> {
    let started = Instant::now();
    let mut engine = Engine::new(cfg, &inputs.profile)?;
    let sr = cfg.sample_rate as f64;
    let n = cfg.block_size;
    let mut warnings = Vec::new();
    if inputs.frames.is_empty() {
        warnings.push("replay contains no frames; rendering silence".to_owned());
        log::warn!("replay contains no frames; rendering silence");
    }
    if let Some(b) = &inputs.breath {
        engine.set_breath(b.clone());
    }

    let last_frame_s = inputs.frames.iter().map(|f| f.timestamp_us).max().unwrap_or(0) as f64 / 1e6;
    let breath_s = inputs.breath.as_ref().map_or(0.0, |b| b.len() as f64 / sr);
    let duration_s = inputs
        .duration_s
        .unwrap_or(last_frame_s.max(breath_s) + cfg.tail_s);
    let blocks = (duration_s * sr / n as f64).ceil() as u64;

    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: cfg.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wav_err = |e: hound::Error| Error::Wav(format!("{}: {e}", out.display()));
    let mut writer = hound::WavWriter::create(out, spec).map_err(wav_err)?;

    let mut timeline = vec![SceneChange {
        at_s: 0.0,
        scene: engine.current_scene().to_owned(),
    }];
    let cues: Vec<(u64, usize)> = cfg
        .cues
        .iter()
        .map(|c| {
            let block = (c.at_s * sr / n as f64).ceil() as u64;
            (block, engine.scenes().index(&c.scene).expect("validated"))
        })
        .collect();
    let mut next_cue = 0;

    let mut frames = inputs.frames.iter().peekable();
    let mut peak = 0.0f32;
    let mut reported_faults = 0;
    for b in 0..blocks {
        while next_cue < cues.len() && cues[next_cue].0 <= b {
            engine.switch_scene(cues[next_cue].1);
            timeline.push(SceneChange {
                at_s: b as f64 * n as f64 / sr,
                scene: engine.current_scene().to_owned(),
            });
            next_cue += 1;
        }
        let now = engine.clock_us();
        while let Some(f) = frames.next_if(|f| f.timestamp_us <= now) {
            engine.push_frame(f);
        }
        let (l, r) = engine.process_block();
        for (&a, &c) in l.iter().zip(r) {
            peak = peak.max(a.abs()).max(c.abs());
            writer.write_sample(a).map_err(wav_err)?;
            writer.write_sample(c).map_err(wav_err)?;
        }
        if engine.faults() > reported_faults {
            log::error!("fault in block {b}: output muted, sound objects reset");
            reported_faults = engine.faults();
        }
    }
    writer.finalize().map_err(wav_err)?;

    let wall = started.elapsed().as_secs_f64();
    let rendered_s = blocks as f64 * n as f64 / sr;
    let peak = peak as f64;
    let report = RenderReport {
        wav: out.to_path_buf(),
        sample_rate: cfg.sample_rate,
        block_size: n,
        seed: cfg.seed.unwrap_or(0),
        blocks,
        duration_s: rendered_s,
        frames: inputs.frames.len(),
        scene_timeline: timeline,
        faults: engine.faults(),
        peak,
        peak_dbfs: 20.0 * peak.max(1e-10).log10(),
        wall_time_s: wall,
        real_time_factor: if rendered_s > 0.0 { wall / rendered_s } else { 0.0 },
        warnings,
    };
    let report_path = RenderReport::report_path(out);
    std::fs::write(&report_path, report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_emg, Profile};
    use crate::mapping::Cue;

    fn cfg() -> EngineConfig {
        EngineConfig {
            seed: Some(11),
            initial_scene: "musicking".into(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_replay_renders_silence_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("silent.wav");
        let rep = render_offline(&cfg(), &RenderInputs::default(), &out).unwrap();
        assert_eq!(rep.warnings.len(), 1);
        assert_eq!(rep.peak, 0.0);
        let reader = hound::WavReader::open(&out).unwrap();
        assert_eq!(reader.spec().channels, 2);
        assert_eq!(reader.spec().sample_format, hound::SampleFormat::Float);
        assert!(reader.duration() > 0);
        assert!(RenderReport::report_path(&out).exists());
    }

    #[test]
    fn cues_appear_in_timeline() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("cues.wav");
        let mut c = cfg();
        c.initial_scene = "breath".into();
        c.cues = vec![Cue {
            at_s: 1.0,
            scene: "standstill".into(),
        }];
        let inputs = RenderInputs {
            frames: synth_emg(Profile::Meso, 1, 2.0).unwrap(),
            ..Default::default()
        };
        let rep = render_offline(&c, &inputs, &out).unwrap();
        assert_eq!(rep.scene_timeline.len(), 2);
        assert_eq!(rep.scene_timeline[1].scene, "standstill");
        assert!((rep.scene_timeline[1].at_s - 1.0).abs() < 256.0 / 48_000.0);
        assert_eq!(rep.faults, 0);
    }
}
