//! Breath microphone input from WAV files, resampled to the engine rate.

use std::path::Path;

use rubato::{
    Resampler, SincFixedIn, SincInterpolationParameters, SincInterpolationType, WindowFunction,
};

use crate::error::{Error, Result};

/// A block of breath audio at the engine rate.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathFrame {
    pub timestamp_us: u64,
    pub samples: Vec<f32>,
}

/// Load a WAV file as mono at `engine_rate`. Multi-channel files are
/// averaged down to mono.
pub fn load_breath_wav(path: impl AsRef<Path>, engine_rate: u32) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let mut reader =
        hound::WavReader::open(path).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Wav(e.to_string()))?
        }
        (fmt, bits) => {
            return Err(Error::Wav(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bit",
                path.display()
            )))
        }
    };
    let mono: Vec<f32> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f32>() / channels as f32)
        .collect();
    if spec.sample_rate == engine_rate {
        return Ok(mono);
    }
    resample(&mono, spec.sample_rate, engine_rate)
}

/// Windowed-sinc sample-rate conversion of a whole signal. The nominal
/// filter delay is trimmed; the residual latency is below 0.5 ms. The output
/// has `round(len * to / from)` samples.
pub fn resample(input: &[f32], from: u32, to: u32) -> Result<Vec<f32>> {
    if from == 0 || to == 0 {
        return Err(Error::Invalid("sample rates must be positive".into()));
    }
    if from == to {
        return Ok(input.to_vec());
    }
    let ratio = to as f64 / from as f64;
    let params = SincInterpolationParameters {
        sinc_len: 256,
        f_cutoff: 0.915,
        oversampling_factor: 256,
        interpolation: SincInterpolationType::Cubic,
        window: WindowFunction::BlackmanHarris2,
    };
    const CHUNK: usize = 1024;
    let mut rs = SincFixedIn::<f64>::new(ratio, 1.0, params, CHUNK, 1)
        .map_err(|e| Error::Invalid(format!("resampler: {e}")))?;
    let expected = (input.len() as f64 * ratio).round() as usize;
    let delay = rs.output_delay();
    let mut out: Vec<f64> = Vec::with_capacity(expected + delay + CHUNK);
    let data: Vec<f64> = input.iter().map(|&s| s as f64).collect();
    let mut pos = 0;
    let fail = |e: rubato::ResampleError| Error::Invalid(format!("resampler: {e}"));
    while data.len() - pos >= rs.input_frames_next() {
        let n = rs.input_frames_next();
        let block = rs.process(&[&data[pos..pos + n]], None).map_err(fail)?;
        out.extend_from_slice(&block[0]);
        pos += n;
    }
    if pos < data.len() {
        let block = rs.process_partial(Some(&[&data[pos..]]), None).map_err(fail)?;
        out.extend_from_slice(&block[0]);
    }
    while out.len() < expected + delay {
        let block = rs.process_partial::<&[f64]>(None, None).map_err(fail)?;
        out.extend_from_slice(&block[0]);
    }
    Ok(out[delay..delay + expected].iter().map(|&s| s as f32).collect())
}

/// Plays a loaded breath signal block by block; silence after the end.
#[derive(Debug, Clone, Default)]
pub struct BreathSource {
    samples: Vec<f32>,
    pos: usize,
    sample_rate: u32,
}

impl BreathSource {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            pos: 0,
            sample_rate,
        }
    }

    pub fn silent(sample_rate: u32) -> Self {
        Self::new(Vec::new(), sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fill `out` with the next samples (no allocation).
    pub fn fill(&mut self, out: &mut [f32]) {
        let avail = self.samples.len().saturating_sub(self.pos).min(out.len());
        if avail > 0 {
            out[..avail].copy_from_slice(&self.samples[self.pos..self.pos + avail]);
        }
        out[avail..].fill(0.0);
        self.pos += out.len();
    }

    pub fn next_frame(&mut self, len: usize) -> BreathFrame {
        let timestamp_us = (self.pos as u64 * 1_000_000) / self.sample_rate.max(1) as u64;
        let mut samples = vec![0.0; len];
        self.fill(&mut samples);
        BreathFrame {
            timestamp_us,
            samples,
        }
    }
}
