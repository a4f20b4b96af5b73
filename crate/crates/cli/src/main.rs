//! `sonomyo`: record, analyze, calibrate, render and perform.

use std::io::Write;
use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sonomyo_core::control::{addresses, protocol};
use sonomyo_core::engine::{render_offline, run_live, LiveOptions, Output, RenderInputs};
use sonomyo_core::features::{analyze, calibrate, features_csv};
use sonomyo_core::ingest::{
    load_breath_wav, osc::MAX_DATAGRAM, replay_open, synth_emg_device, OscParser, ParseOutcome, Profile, Recorder,
};
use sonomyo_core::{CalibrationProfile, Device, EngineConfig, Error, Mode};

/// Real-time EMG and breath sonification engine.
#[derive(Debug, Parser)]
#[command(name = "sonomyo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the engine subcommands. Config values are the baseline;
/// flags override them.
#[derive(Debug, Args)]
struct Common {
    /// Engine config file (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for the stochastic sound objects
    #[arg(long)]
    seed: Option<u64>,
    /// Initial scene
    #[arg(long)]
    scene: Option<String>,
    /// Calibration profile (overrides `[calibration] path`)
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Breath recording, WAV (overrides `breath`)
    #[arg(long)]
    breath: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a live session until interrupted
    Run {
        #[command(flatten)]
        common: Common,
        /// OSC listen port (overrides `[osc] port`)
        #[arg(long)]
        osc_port: Option<u16>,
        /// WebSocket control port (overrides `[control] port`)
        #[arg(long)]
        ws_port: Option<u16>,
        /// Audio output: null, stdout (raw f32le stereo) or a .wav path
        #[arg(long)]
        output: Option<String>,
        /// Record incoming EMG frames to this replay CSV
        #[arg(long)]
        record: Option<PathBuf>,
        /// Log feature vectors to this CSV
        #[arg(long)]
        features: Option<PathBuf>,
        /// Stop after this many seconds
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Render a replay file offline to a 32-bit float stereo WAV
    Render {
        #[command(flatten)]
        common: Common,
        /// Replay CSV; omit to render silence
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Output WAV; the report goes to <out>.report.json
        #[arg(long)]
        out: PathBuf,
        /// Render length in seconds (default: input length plus tail_s)
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Compute the feature CSV of a replay file
    Analyze {
        /// Replay CSV
        #[arg(long)]
        replay: PathBuf,
        /// Calibration profile (default: nominal scaling)
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Engine config file, for its `[features]` table
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a calibration profile from rest and maximum-contraction recordings
    Calibrate {
        /// Rest recording (replay CSV)
        #[arg(long)]
        rest: PathBuf,
        /// Maximum voluntary contraction recording (replay CSV)
        #[arg(long)]
        mvc: PathBuf,
        /// Output profile (TOML)
        #[arg(long)]
        out: PathBuf,
        /// Engine config file, for its `[features]` window and hop
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Record EMG frames arriving over OSC into a replay CSV
    Record {
        /// Output replay CSV
        #[arg(long)]
        out: PathBuf,
        /// OSC listen port
        #[arg(long, default_value_t = sonomyo_core::ingest::osc::DEFAULT_PORT)]
        port: u16,
        /// OSC listen address
        #[arg(long, default_value = "0.0.0.0")]
        bind: String,
        /// Stop after this many seconds (default: until interrupted)
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Write a synthetic EMG replay file
    Synth {
        /// Activity profile: rest, micro, meso or macro
        #[arg(long, default_value = "meso")]
        profile: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Length in seconds
        #[arg(long, default_value_t = 10.0)]
        duration: f64,
        /// Devices to include (left_arm, right_calf); default both
        #[arg(long, value_delimiter = ',')]
        device: Vec<String>,
        /// Output replay CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the parameter schema and control addresses as JSON
    Schema {
        /// Engine config file (its scenes add edge addresses)
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// Bad flags, config, or input files.
    Usage(anyhow::Error),
    /// The engine ran but hit faults or could not start.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Control(_)) => Failure::Runtime(e),
            _ => Failure::Usage(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, Failure> {
    Ok(match path {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    })
}

fn load_profile(path: Option<&Path>) -> Result<CalibrationProfile, Failure> {
    match path {
        Some(p) => Ok(CalibrationProfile::load(p)?),
        None => Ok(CalibrationProfile::default()),
    }
}

/// Apply the common overrides; returns the config and the calibration.
fn prepare(common: &Common, mode: Mode) -> Result<(EngineConfig, CalibrationProfile), Failure> {
    let mut cfg = load_config(common.config.as_deref())?;
    cfg.mode = mode;
    if let Some(s) = common.seed {
        cfg.seed = Some(s);
    }
    if let Some(s) = &common.scene {
        cfg.initial_scene = s.clone();
    }
    if let Some(p) = &common.calibration {
        cfg.calibration.path = Some(p.clone());
    }
    if let Some(p) = &common.breath {
        cfg.breath = Some(p.clone());
    }
    cfg.validate()?;
    let profile = load_profile(cfg.calibration.path.as_deref())?;
    Ok((cfg, profile))
}

fn breath(cfg: &EngineConfig) -> Result<Option<Vec<f32>>, Failure> {
    match &cfg.breath {
        Some(p) => Ok(Some(load_breath_wav(p, cfg.sample_rate)?)),
        None => Ok(None),
    }
}

fn interrupt_flag() -> Arc<AtomicBool> {
    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    if let Err(e) = ctrlc::set_handler(move || s.store(true, Ordering::SeqCst)) {
        log::warn!("cannot install the interrupt handler: {e}");
    }
    stop
}

fn seconds(s: Option<f64>, flag: &str) -> Result<Option<Duration>, Failure> {
    match s {
        Some(v) if !(v.is_finite() && v >= 0.0) => Err(Failure::Usage(anyhow::anyhow!("--{flag} must be >= 0"))),
        Some(v) => Ok(Some(Duration::from_secs_f64(v))),
        None => Ok(None),
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            common,
            osc_port,
            ws_port,
            output,
            record,
            features,
            duration,
        } => {
            let (mut cfg, profile) = prepare(&common, Mode::Live)?;
            if let Some(p) = osc_port {
                cfg.osc.port = p;
            }
            if let Some(p) = ws_port {
                cfg.control.port = p;
            }
            let output = Output::parse(output.as_deref().unwrap_or(&cfg.audio.output))?;
            let opts = LiveOptions {
                output,
                record,
                features_csv: features,
                breath: breath(&cfg)?,
                profile,
                duration: seconds(duration, "duration")?,
            };
            let report = run_live(&cfg, opts, interrupt_flag())?;
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            if report.faults > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!("{} faults during the session", report.faults)));
            }
            Ok(())
        }
        Command::Render {
            common,
            replay,
            out,
            duration,
        } => {
            let (cfg, profile) = prepare(&common, Mode::Offline)?;
            let frames = match &replay {
                Some(p) => {
                    let r = replay_open(p)?;
                    if !r.complete {
                        log::warn!("{}: no closing '# end' line; recording may be truncated", p.display());
                    }
                    r.frames
                }
                None => Vec::new(),
            };
            let inputs = RenderInputs {
                frames,
                breath: breath(&cfg)?,
                profile,
                duration_s: seconds(duration, "duration")?.map(|d| d.as_secs_f64()),
            };
            let report = render_offline(&cfg, &inputs, &out)?;
            println!("{}", report.to_json());
            if report.faults > 0 {
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "{} faults during the render; see {}",
                    report.faults,
                    sonomyo_core::engine::RenderReport::report_path(&out).display()
                )));
            }
            Ok(())
        }
        Command::Analyze {
            replay,
            calibration,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            cfg.features.validate()?;
            let profile = load_profile(calibration.as_deref())?;
            let r = replay_open(&replay)?;
            let csv = features_csv(&analyze(&r.frames, cfg.features, &profile));
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::stdout()
                    .write_all(csv.as_bytes())
                    .context("writing to stdout")?,
            }
            Ok(())
        }
        Command::Calibrate { rest, mvc, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let rest = replay_open(&rest)?;
            let mvc = replay_open(&mvc)?;
            let profile = calibrate(&rest.frames, &mvc.frames, cfg.features.window, cfg.features.hop)?;
            profile.save(&out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Record {
            out,
            port,
            bind,
            duration,
        } => {
            let limit = seconds(duration, "duration")?;
            let socket = UdpSocket::bind((bind.as_str(), port))
                .map_err(|e| Error::Control(format!("cannot bind OSC port {bind}:{port}: {e}")))?;
            socket
                .set_read_timeout(Some(Duration::from_millis(50)))
                .context("configuring the socket")?;
            let mut rec = Recorder::create(&out)?;
            let stop = interrupt_flag();
            let started = Instant::now();
            let mut parser = OscParser::new();
            let mut buf = [0u8; MAX_DATAGRAM];
            let mut frames = Vec::new();
            while !stop.load(Ordering::SeqCst) && limit.is_none_or(|d| started.elapsed() < d) {
                let Ok(len) = socket.recv(&mut buf) else { continue };
                let receipt = started.elapsed().as_micros() as u64;
                parser.parse_datagram(&buf[..len], receipt, |o| {
                    if let ParseOutcome::Emg(f) = o {
                        frames.push(f);
                    }
                });
                for f in frames.drain(..) {
                    rec.write(&f)?;
                }
            }
            let n = rec.finish()?;
            eprintln!("recorded {n} frames to {}", out.display());
            Ok(())
        }
        Command::Synth {
            profile,
            seed,
            duration,
            device,
            out,
        } => {
            let profile: Profile = profile.parse().map_err(|e: String| Failure::Usage(anyhow::anyhow!(e)))?;
            let devices: Vec<Device> = if device.is_empty() {
                Device::ALL.to_vec()
            } else {
                device
                    .iter()
                    .map(|d| d.parse::<Device>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::Usage(anyhow::anyhow!("{e}")))?
            };
            let mut frames = Vec::new();
            for d in devices {
                frames.extend(synth_emg_device(d, profile, seed, duration)?);
            }
            frames.sort_by_key(|f| (f.timestamp_us, f.device.index()));
            let n = sonomyo_core::ingest::record(frames, &out)?;
            eprintln!("wrote {n} frames to {}", out.display());
            Ok(())
        }
        Command::Schema { config } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.seed.get_or_insert(0);
            let scenes = cfg.validate()?;
            let doc = serde_json::json!({
                "params": protocol::schema(),
                "addresses": addresses(&scenes.registry()),
                "scenes": scenes.scenes.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&doc).context("serializing")?);
            Ok(())
        }
    }
}
