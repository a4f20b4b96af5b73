//! Live sessions: OSC ingest, control plane, paced audio loop, recorder and
//! feature logger, each on its own thread.
//!
//! The audio thread owns the [`Engine`] and talks to everything else through
//! wait-free `rtrb` queues. It is paced by the wall clock at one block per
//! block period; rendered audio goes to a writer thread (null, WAV file or
//! raw little-endian f32 on stdout).

use std::io::{BufWriter, Read, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::unbounded;

use super::{Engine, EngineConfig, Telemetry};
use crate::control::protocol::SessionInfo;
use crate::control::{translate_midi, CcMap, ControlHub, ControlServer, EngineEnd, EngineLink, HubConfig, MidiParser};
use crate::error::{Error, Result};
use crate::features::{CalibrationProfile, FeatureVector, FEATURE_HEADER};
use crate::ingest::osc::MAX_DATAGRAM;
use crate::ingest::{EmgFrame, IngestCounters, OscParser, ParseOutcome, Recorder};

/// Where live audio goes.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Null,
    Stdout,
    Wav(PathBuf),
}

impl Output {
    /// `"null"`, `"stdout"`, or a path ending in `.wav`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "null" => Ok(Output::Null),
            "stdout" => Ok(Output::Stdout),
            p if p.ends_with(".wav") => Ok(Output::Wav(PathBuf::from(p))),
            other => Err(Error::config(
                "audio.output",
                format!("'{other}' is not null, stdout or a .wav path"),
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub output: Output,
    /// Record incoming EMG frames as a replay CSV.
    pub record: Option<PathBuf>,
    /// Log feature vectors as CSV.
    pub features_csv: Option<PathBuf>,
    /// Breath signal at the engine rate.
    pub breath: Option<Vec<f32>>,
    pub profile: CalibrationProfile,
    /// Stop by itself after this long.
    pub duration: Option<Duration>,
}

impl Default for LiveOptions {
    fn default() -> Self {
        Self {
            output: Output::Null,
            record: None,
            features_csv: None,
            breath: None,
            profile: CalibrationProfile::default(),
            duration: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct LiveReport {
    pub blocks: u64,
    /// Blocks that finished later than one block period past their deadline.
    pub overruns: u64,
    /// Output blocks lost because the writer fell behind.
    pub output_drops: u64,
    pub faults: u64,
    pub datagrams: u64,
    pub malformed: u64,
    pub frames: u64,
    /// Frames lost because the audio thread's queue was full.
    pub dropped_frames: u64,
    pub recorded: Option<usize>,
    pub features_logged: u64,
    pub features_dropped: u64,
}

#[derive(Default)]
struct AudioStats {
    blocks: u64,
    overruns: u64,
    output_drops: u64,
    faults: u64,
    features_dropped: u64,
}

/// A running live session.
pub struct LiveSession {
    stop: Arc<AtomicBool>,
    started: Instant,
    osc_addr: SocketAddr,
    ws_addr: Option<SocketAddr>,
    counters: Arc<IngestCounters>,
    frames: Arc<AtomicU64>,
    queue_drops: Arc<AtomicU64>,
    features_logged: Arc<AtomicU64>,
    duration: Option<Duration>,
    ingest: Option<JoinHandle<()>>,
    audio: Option<JoinHandle<AudioStats>>,
    writer: Option<JoinHandle<Result<()>>>,
    recorder: Option<JoinHandle<Result<usize>>>,
    features: Option<JoinHandle<Result<()>>>,
    server: Option<ControlServer>,
    hub: Option<ControlHub>,
}

const FRAME_QUEUE: usize = 8192;
const COMMAND_QUEUE: usize = 256;
const FEATURE_QUEUE: usize = 8192;
const OUTPUT_BLOCKS: usize = 64;
/// Meter telemetry period.
const METER_PERIOD_S: f64 = 0.05;

impl LiveSession {
    /// Bind ports, open outputs and start every thread. Port 0 in the
    /// config picks a free port; see [`LiveSession::osc_addr`].
    pub fn start(cfg: &EngineConfig, opts: LiveOptions) -> Result<Self> {
        let mut engine = Engine::new(cfg, &opts.profile)?;
        if let Some(b) = opts.breath {
            engine.set_breath(b);
        }
        let socket = UdpSocket::bind((cfg.osc.bind.as_str(), cfg.osc.port)).map_err(|e| {
            Error::Control(format!("cannot bind OSC port {}:{}: {e}", cfg.osc.bind, cfg.osc.port))
        })?;
        socket
            .set_read_timeout(Some(Duration::from_millis(20)))
            .map_err(|e| Error::Control(e.to_string()))?;
        let osc_addr = socket.local_addr().map_err(|e| Error::Control(e.to_string()))?;

        let stop = Arc::new(AtomicBool::new(false));
        let ingest_done = Arc::new(AtomicBool::new(false));
        let audio_done = Arc::new(AtomicBool::new(false));
        let started = Instant::now();

        // control plane
        let (link, end) = EngineLink::pair(COMMAND_QUEUE);
        let (hub, server) = if cfg.control.enabled {
            let info = SessionInfo::new(engine.scenes(), &opts.profile);
            let hub = ControlHub::spawn(link, info, engine.state(), HubConfig::default());
            let server = ControlServer::start(&hub, &cfg.control.bind, cfg.control.port)?;
            (Some(hub), Some(server))
        } else {
            drop(link);
            (None, None)
        };
        let ws_addr = server.as_ref().map(|s| s.local_addr());
        let hub_tx = hub.as_ref().map(|h| h.sender());

        if let Some(dev) = &cfg.midi.device {
            let mut file = std::fs::File::open(dev).map_err(|e| Error::io(dev, e))?;
            let map = CcMap::new(cfg.midi.cc.clone());
            let tx = hub_tx.clone();
            let stop_m = stop.clone();
            // reads block on the device, so this thread is detached
            std::thread::Builder::new()
                .name("midi".into())
                .spawn(move || {
                    let mut parser = MidiParser::default();
                    let mut buf = [0u8; 64];
                    while !stop_m.load(Ordering::SeqCst) {
                        let n = match file.read(&mut buf) {
                            Ok(0) => break,
                            Ok(n) => n,
                            Err(e) => {
                                log::warn!("MIDI read failed: {e}");
                                break;
                            }
                        };
                        for &b in &buf[..n] {
                            let Some(msg) = parser.push(b) else { continue };
                            if let (Some(ev), Some(tx)) = (translate_midi(msg, &map, now_us()), &tx) {
                                tx.send(ev);
                            }
                        }
                    }
                })
                .map_err(|e| Error::Control(e.to_string()))?;
        }

        // recorder
        let (rec_tx, rec_rx) = unbounded::<EmgFrame>();
        let recorder = match &opts.record {
            Some(path) => {
                let mut rec = Recorder::create(path)?;
                Some(
                    std::thread::Builder::new()
                        .name("recorder".into())
                        .spawn(move || {
                            for f in rec_rx.iter() {
                                rec.write(&f)?;
                            }
                            rec.finish()
                        })
                        .map_err(|e| Error::Control(e.to_string()))?,
                )
            }
            None => None,
        };
        let rec_tx = opts.record.is_some().then_some(rec_tx);

        // feature logger
        let features_logged = Arc::new(AtomicU64::new(0));
        let features = match &opts.features_csv {
            Some(path) => {
                let (tap, mut rx) = rtrb::RingBuffer::<FeatureVector>::new(FEATURE_QUEUE);
                engine.set_feature_tap(tap);
                let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
                let path = path.clone();
                let done = audio_done.clone();
                let logged = features_logged.clone();
                Some(
                    std::thread::Builder::new()
                        .name("features".into())
                        .spawn(move || {
                            let mut w = BufWriter::new(file);
                            let io = |e| Error::io(&path, e);
                            writeln!(w, "{FEATURE_HEADER}").map_err(io)?;
                            loop {
                                let finished = done.load(Ordering::SeqCst);
                                let mut any = false;
                                while let Ok(fv) = rx.pop() {
                                    writeln!(w, "{}", fv.csv_row()).map_err(io)?;
                                    logged.fetch_add(1, Ordering::Relaxed);
                                    any = true;
                                }
                                if finished && rx.is_empty() {
                                    break;
                                }
                                if !any {
                                    std::thread::sleep(Duration::from_millis(5));
                                }
                            }
                            w.flush().map_err(io)
                        })
                        .map_err(|e| Error::Control(e.to_string()))?,
                )
            }
            None => None,
        };

        // output writer
        let n = cfg.block_size;
        let (out_tx, out_rx) = rtrb::RingBuffer::<f32>::new(OUTPUT_BLOCKS * 2 * n);
        let writer = spawn_writer(opts.output.clone(), cfg.sample_rate, out_rx, audio_done.clone())?;

        // ingest
        let (frame_tx, frame_rx) = rtrb::RingBuffer::<EmgFrame>::new(FRAME_QUEUE);
        let counters = Arc::new(IngestCounters::default());
        let frames = Arc::new(AtomicU64::new(0));
        let queue_drops = Arc::new(AtomicU64::new(0));
        let ingest = {
            let stop = stop.clone();
            let done = ingest_done.clone();
            let mut parser = OscParser::with_counters(counters.clone());
            let frames = frames.clone();
            let drops = queue_drops.clone();
            let mut frame_tx = frame_tx;
            let hub_tx = hub_tx.clone();
            std::thread::Builder::new()
                .name("osc-ingest".into())
                .spawn(move || {
                    let mut buf = [0u8; MAX_DATAGRAM];
                    while !stop.load(Ordering::SeqCst) {
                        let len = match socket.recv(&mut buf) {
                            Ok(len) => len,
                            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                                continue
                            }
                            Err(e) => {
                                log::warn!("OSC receive failed: {e}");
                                continue;
                            }
                        };
                        let receipt = started.elapsed().as_micros() as u64;
                        parser.parse_datagram(&buf[..len], receipt, |o| match o {
                            ParseOutcome::Emg(f) => {
                                frames.fetch_add(1, Ordering::Relaxed);
                                if frame_tx.push(f).is_err() {
                                    drops.fetch_add(1, Ordering::Relaxed);
                                }
                                if let Some(tx) = &rec_tx {
                                    let _ = tx.send(f);
                                }
                            }
                            ParseOutcome::Control(ev) => {
                                if let Some(tx) = &hub_tx {
                                    tx.send(ev);
                                }
                            }
                            ParseOutcome::Ignored => {}
                        });
                    }
                    done.store(true, Ordering::SeqCst);
                })
                .map_err(|e| Error::Control(e.to_string()))?
        };

        let audio = {
            let stop = stop.clone();
            std::thread::Builder::new()
                .name("audio".into())
                .spawn(move || {
                    audio_loop(engine, frame_rx, end, out_tx, started, &stop, &ingest_done, &audio_done)
                })
                .map_err(|e| Error::Control(e.to_string()))?
        };

        log::info!(
            "live: OSC on {osc_addr}, control on {}",
            ws_addr.map_or("(disabled)".to_owned(), |a| a.to_string())
        );
        Ok(Self {
            stop,
            started,
            osc_addr,
            ws_addr,
            counters,
            frames,
            queue_drops,
            features_logged,
            duration: opts.duration,
            ingest: Some(ingest),
            audio: Some(audio),
            writer: Some(writer),
            recorder,
            features,
            server,
            hub,
        })
    }

    pub fn osc_addr(&self) -> SocketAddr {
        self.osc_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    /// Flag that stops the session when set (e.g. from a signal handler).
    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn counters(&self) -> &IngestCounters {
        &self.counters
    }

    /// EMG frames received so far.
    pub fn frames_received(&self) -> u64 {
        self.frames.load(Ordering::Relaxed)
    }

    /// Block until the stop flag is set or the duration elapses, then shut
    /// down.
    pub fn wait(self) -> Result<LiveReport> {
        while !self.stop.load(Ordering::SeqCst) {
            if self.duration.is_some_and(|d| self.started.elapsed() >= d) {
                break;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        self.stop()
    }

    /// Stop every thread, flush the recorder and outputs, and report.
    pub fn stop(mut self) -> Result<LiveReport> {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.ingest.take() {
            let _ = t.join();
        }
        let mut first_err = None;
        let stats = match self.audio.take().map(|t| t.join()) {
            Some(Ok(s)) => s,
            Some(Err(_)) => {
                first_err = Some(Error::Control("audio thread panicked".into()));
                AudioStats::default()
            }
            None => AudioStats::default(),
        };
        if let Some(t) = self.writer.take() {
            if let Err(e) = t.join().unwrap_or(Ok(())) {
                first_err.get_or_insert(e);
            }
        }
        if let Some(t) = self.features.take() {
            if let Err(e) = t.join().unwrap_or(Ok(())) {
                first_err.get_or_insert(e);
            }
        }
        let recorded = match self.recorder.take().map(|t| t.join()) {
            Some(Ok(Ok(n))) => Some(n),
            Some(Ok(Err(e))) => {
                first_err.get_or_insert(e);
                None
            }
            Some(Err(_)) => None,
            None => None,
        };
        if let Some(s) = self.server.take() {
            s.shutdown();
        }
        if let Some(h) = self.hub.take() {
            h.shutdown();
        }
        if let Some(e) = first_err {
            return Err(e);
        }
        let report = LiveReport {
            blocks: stats.blocks,
            overruns: stats.overruns,
            output_drops: stats.output_drops,
            faults: stats.faults,
            datagrams: self.counters.received(),
            malformed: self.counters.malformed(),
            frames: self.frames.load(Ordering::Relaxed),
            dropped_frames: self.queue_drops.load(Ordering::Relaxed) + self.counters.dropped(),
            recorded,
            features_logged: self.features_logged.load(Ordering::Relaxed),
            features_dropped: stats.features_dropped,
        };
        if report.overruns > 0 {
            log::warn!("{} audio callback overruns", report.overruns);
        }
        Ok(report)
    }
}

/// Start a session and run it until `stop` is set (or the configured
/// duration elapses).
pub fn run_live(cfg: &EngineConfig, opts: LiveOptions, stop: Arc<AtomicBool>) -> Result<LiveReport> {
    let session = LiveSession::start(cfg, opts)?;
    let own = session.stop_flag();
    let started = Instant::now();
    let duration = session.duration;
    while !stop.load(Ordering::SeqCst) && !own.load(Ordering::SeqCst) {
        if duration.is_some_and(|d| started.elapsed() >= d) {
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    session.stop()
}

fn now_us() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn audio_loop(
    mut engine: Engine,
    mut frames: rtrb::Consumer<EmgFrame>,
    mut end: EngineEnd,
    mut out: rtrb::Producer<f32>,
    started: Instant,
    stop: &AtomicBool,
    ingest_done: &AtomicBool,
    audio_done: &AtomicBool,
) -> AudioStats {
    struct Done<'a>(&'a AtomicBool);
    impl Drop for Done<'_> {
        fn drop(&mut self) {
            self.0.store(true, Ordering::SeqCst);
        }
    }
    let _done = Done(audio_done);
    let n = engine.block_size();
    let block = Duration::from_secs_f64(n as f64 / engine.sample_rate() as f64);
    let meter_every = ((METER_PERIOD_S * engine.sample_rate() as f64 / n as f64).round() as u64).max(1);
    let mut stats = AudioStats::default();
    let mut pending: Option<EmgFrame> = None;
    while !stop.load(Ordering::SeqCst) {
        let ctx = super::guard::AudioContext::enter();
        let now = engine.clock_us();
        loop {
            let f = match pending.take() {
                Some(f) => f,
                None => match frames.pop() {
                    Ok(f) => f,
                    Err(_) => break,
                },
            };
            if f.timestamp_us > now {
                pending = Some(f);
                break;
            }
            engine.push_frame(&f);
        }
        let mut changed = false;
        while let Ok(c) = end.commands.pop() {
            changed |= engine.apply(&c);
        }
        let (l, r) = engine.process_block();
        if let Ok(chunk) = out.write_chunk_uninit(2 * n) {
            chunk.fill_from_iter((0..2 * n).map(|i| if i % 2 == 0 { l[i / 2] } else { r[i / 2] }));
        } else {
            stats.output_drops += 1;
        }
        if changed {
            let _ = end.telemetry.push(Telemetry::State(engine.state()));
        }
        if engine.blocks() % meter_every == 0 {
            let _ = end.telemetry.push(Telemetry::Meters(engine.meter_frame()));
        }
        drop(ctx);
        let deadline = started + block * engine.blocks() as u32;
        let now = Instant::now();
        if now > deadline + block {
            stats.overruns += 1;
        } else if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
    // hand every frame that arrived to the feature stage before exiting
    while !ingest_done.load(Ordering::SeqCst) {
        std::thread::sleep(Duration::from_millis(1));
    }
    if let Some(f) = pending.take() {
        engine.push_frame(&f);
    }
    while let Ok(f) = frames.pop() {
        engine.push_frame(&f);
    }
    stats.blocks = engine.blocks();
    stats.faults = engine.faults();
    stats.features_dropped = engine.tap_dropped();
    stats
}

fn spawn_writer(
    output: Output,
    sample_rate: u32,
    mut rx: rtrb::Consumer<f32>,
    done: Arc<AtomicBool>,
) -> Result<JoinHandle<Result<()>>> {
    enum Sink {
        Null,
        Stdout(BufWriter<std::io::Stdout>),
        Wav(hound::WavWriter<BufWriter<std::fs::File>>, PathBuf),
    }
    let mut sink = match output {
        Output::Null => Sink::Null,
        Output::Stdout => Sink::Stdout(BufWriter::new(std::io::stdout())),
        Output::Wav(path) => {
            let spec = hound::WavSpec {
                channels: 2,
                sample_rate,
                bits_per_sample: 32,
                sample_format: hound::SampleFormat::Float,
            };
            let w = hound::WavWriter::create(&path, spec).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
            Sink::Wav(w, path)
        }
    };
    std::thread::Builder::new()
        .name("audio-out".into())
        .spawn(move || {
            loop {
                let finished = done.load(Ordering::SeqCst);
                let avail = rx.slots();
                if avail > 0 {
                    let chunk = rx.read_chunk(avail).expect("slots available");
                    let (a, b) = chunk.as_slices();
                    for &s in a.iter().chain(b) {
                        match &mut sink {
                            Sink::Null => {}
                            Sink::Stdout(w) => {
                                // a closed pipe ends playback, not the session
                                let _ = w.write_all(&s.to_le_bytes());
                            }
                            Sink::Wav(w, path) => {
                                w.write_sample(s).map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?
                            }
                        }
                    }
                    chunk.commit_all();
                } else if finished {
                    break;
                } else {
                    std::thread::sleep(Duration::from_millis(2));
                }
            }
            match sink {
                Sink::Null => Ok(()),
                Sink::Stdout(mut w) => {
                    let _ = w.flush();
                    Ok(())
                }
                Sink::Wav(w, path) => w.finalize().map_err(|e| Error::Wav(format!("{}: {e}", path.display()))),
            }
        })
        .map_err(|e| Error::Control(e.to_string()))
}
