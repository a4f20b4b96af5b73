//! Replay CSV files: `timestamp_us,device,ch1..ch8`, closed by `# end`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use super::{Device, EmgFrame, CHANNELS};
use crate::error::{Error, Result};

pub const REPLAY_HEADER: &str = "timestamp_us,device,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8";
const END_MARKER: &str = "# end";

/// A validated replay file held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub path: PathBuf,
    pub frames: Vec<EmgFrame>,
    /// False when the file lacks the closing `# end` line (interrupted recording).
    pub complete: bool,
}

impl Replay {
    /// Frames in file order, delivered immediately.
    pub fn iter(&self) -> impl Iterator<Item = &EmgFrame> {
        self.frames.iter()
    }

    /// Frames paced by their timestamp deltas, scaled by `speed` (1.0 = real time).
    pub fn paced(&self, speed: f64) -> impl Iterator<Item = EmgFrame> + '_ {
        let start = Instant::now();
        let t0 = self.frames.first().map_or(0, |f| f.timestamp_us);
        let speed = speed.max(1e-6);
        self.frames.iter().map(move |f| {
            let due = Duration::from_secs_f64((f.timestamp_us - t0) as f64 * 1e-6 / speed);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
            *f
        })
    }
}

/// Open and validate a replay file.
pub fn replay_open(path: impl AsRef<Path>) -> Result<Replay> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_replay(&text, path)
}

/// Parse replay text. Errors name the 1-based line and, for data rows, the
/// 1-based row number counted after the header.
pub fn parse_replay(text: &str, path: impl AsRef<Path>) -> Result<Replay> {
    let path = path.as_ref();
    let err = |line: usize, message: String| Error::Replay {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h.trim() == REPLAY_HEADER => {}
        Some((n, h)) => return Err(err(n, format!("bad header '{h}', expected '{REPLAY_HEADER}'"))),
        None => return Err(err(1, "empty file, expected header".into())),
    }

    let mut frames = Vec::new();
    let mut last: [Option<u64>; 2] = [None; 2];
    let mut complete = false;
    let mut row = 0usize;
    for (n, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            complete = trimmed == END_MARKER;
            continue;
        }
        if complete {
            return Err(err(n, "data after end marker".into()));
        }
        row += 1;
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 2 + CHANNELS {
            return Err(err(
                n,
                format!("row {row}: expected {} fields, found {}", 2 + CHANNELS, fields.len()),
            ));
        }
        let ts: u64 = fields[0]
            .parse()
            .map_err(|_| err(n, format!("row {row}: bad timestamp '{}'", fields[0])))?;
        let device: Device = fields[1].parse().map_err(|e| err(n, format!("row {row}: {e}")))?;
        let mut channels = [0i8; CHANNELS];
        for (c, f) in channels.iter_mut().zip(&fields[2..]) {
            *c = f
                .parse()
                .map_err(|_| err(n, format!("row {row}: channel value '{f}' not in [-128, 127]")))?;
        }
        let slot = &mut last[device.index()];
        if let Some(prev) = *slot {
            if ts <= prev {
                return Err(err(
                    n,
                    format!("row {row}: timestamp {ts} does not increase past {prev} for {device}"),
                ));
            }
        }
        *slot = Some(ts);
        frames.push(EmgFrame::new(device, ts, channels));
    }
    Ok(Replay {
        path: path.to_path_buf(),
        frames,
        complete,
    })
}

/// Streaming replay writer. Dropping without [`Recorder::finish`] leaves the
/// file without its end marker, which readers report as incomplete.
pub struct Recorder {
    out: BufWriter<File>,
    path: PathBuf,
    count: usize,
}

impl Recorder {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{REPLAY_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            out,
            path,
            count: 0,
        })
    }

    pub fn write(&mut self, f: &EmgFrame) -> Result<()> {
        let c = f.channels;
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            f.timestamp_us, f.device, c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]
        )
        .map_err(|e| Error::io(&self.path, e))?;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(mut self) -> Result<usize> {
        writeln!(self.out, "{END_MARKER}").map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        Ok(self.count)
    }
}

/// Write a whole stream to `path` and return the number of frames written.
pub fn record(stream: impl IntoIterator<Item = EmgFrame>, path: impl AsRef<Path>) -> Result<usize> {
    let mut rec = Recorder::create(path)?;
    for f in stream {
        rec.write(&f)?;
    }
    rec.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_session, Profile, EMG_PERIOD_US};
    use proptest::prelude::*;

    fn frame(ts: u64) -> EmgFrame {
        EmgFrame::new(Device::LeftArm, ts, [1, -2, 3, -4, 5, -6, 7, -8])
    }

    #[test]
    fn three_rows_in_order() {
        let text = format!(
            "{REPLAY_HEADER}\n0,left_arm,0,0,0,0,0,0,0,0\n5000,left_arm,1,1,1,1,1,1,1,1\n10000,left_arm,2,2,2,2,2,2,2,2\n# end\n"
        );
        let r = parse_replay(&text, "t.csv").unwrap();
        assert_eq!(
            r.frames.iter().map(|f| f.timestamp_us).collect::<Vec<_>>(),
            vec![0, 5000, 10000]
        );
        assert!(r.complete);
    }

    #[test]
    fn regression_cites_row() {
        let mut text = format!("{REPLAY_HEADER}\n");
        for i in 0..6u64 {
            text.push_str(&format!("{},left_arm,0,0,0,0,0,0,0,0\n", i * 5000));
        }
        text.push_str("100,left_arm,0,0,0,0,0,0,0,0\n");
        let e = parse_replay(&text, "t.csv").unwrap_err().to_string();
        assert!(e.contains("row 7"), "{e}");
        assert!(e.contains("line 8"), "{e}");
    }

    #[test]
    fn bad_header_is_rejected() {
        let e = parse_replay("time,dev\n", "t.csv").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn devices_are_monotonic_independently() {
        let text = format!(
            "{REPLAY_HEADER}\n10,left_arm,0,0,0,0,0,0,0,0\n5,right_calf,0,0,0,0,0,0,0,0\n# end\n"
        );
        assert_eq!(parse_replay(&text, "t").unwrap().frames.len(), 2);
    }

    #[test]
    fn missing_end_marker_is_flagged() {
        let text = format!("{REPLAY_HEADER}\n0,left_arm,0,0,0,0,0,0,0,0\n");
        assert!(!parse_replay(&text, "t").unwrap().complete);
    }

    #[test]
    fn empty_stream_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        assert_eq!(record(std::iter::empty(), &p).unwrap(), 0);
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, format!("{REPLAY_HEADER}\n# end\n"));
        assert!(replay_open(&p).unwrap().frames.is_empty());
    }

    #[test]
    fn one_second_at_200_hz() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let frames: Vec<_> = (0..200).map(|i| frame(i * EMG_PERIOD_US)).collect();
        assert_eq!(record(frames.clone(), &p).unwrap(), 200);
        let r = replay_open(&p).unwrap();
        let span = r.frames.last().unwrap().timestamp_us - r.frames[0].timestamp_us;
        assert_eq!(span, 995_000);
        assert_eq!(r.frames, frames);
    }

    #[test]
    fn dropped_recorder_leaves_partial_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("partial.csv");
        {
            let mut rec = Recorder::create(&p).unwrap();
            rec.write(&frame(0)).unwrap();
        }
        let r = replay_open(&p).unwrap();
        assert_eq!(r.frames.len(), 1);
        assert!(!r.complete);
    }

    #[test]
    fn synthetic_session_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sess.csv");
        let frames = synth_session(Profile::Meso, 3, 2.0).unwrap();
        record(frames.clone(), &p).unwrap();
        assert_eq!(replay_open(&p).unwrap().frames, frames);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn record_replay_roundtrip(rows in proptest::collection::vec(
            (1u64..10_000, any::<bool>(), proptest::array::uniform8(any::<i8>())), 0..64)
        ) {
            let mut ts = [0u64; 2];
            let frames: Vec<EmgFrame> = rows.into_iter().map(|(dt, calf, ch)| {
                let d = if calf { Device::RightCalf } else { Device::LeftArm };
                ts[d.index()] += dt;
                EmgFrame::new(d, ts[d.index()], ch)
            }).collect();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.csv");
            record(frames.clone(), &p).unwrap();
            prop_assert_eq!(replay_open(&p).unwrap().frames, frames);
        }
    }
}
