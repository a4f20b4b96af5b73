//! End-to-end checks of the `sonomyo` binary: flags, exit codes and files.

use std::net::UdpSocket;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

fn sonomyo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonomyo"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run sonomyo")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, profile: &str, seed: &str, secs: &str, device: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = sonomyo(&[
        "synth", "--profile", profile, "--seed", seed, "--duration", secs, "--device", device, "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        (
            "run",
            &[
                "--config", "--seed", "--scene", "--calibration", "--breath", "--osc-port", "--ws-port", "--output",
                "--record", "--features", "--duration",
            ],
        ),
        ("render", &["--config", "--seed", "--scene", "--calibration", "--breath", "--replay", "--out", "--duration"]),
        ("analyze", &["--replay", "--calibration", "--config", "--out"]),
        ("calibrate", &["--rest", "--mvc", "--out", "--config"]),
        ("record", &["--out", "--port", "--bind", "--duration"]),
        ("synth", &["--profile", "--seed", "--duration", "--device", "--out"]),
        ("schema", &["--config"]),
    ];
    for (sub, flags) in expected {
        let o = sonomyo(&[sub, "--help"]);
        assert!(o.status.success());
        let text = String::from_utf8_lossy(&o.stdout);
        for f in *flags {
            assert!(text.contains(f), "{sub} --help is missing {f}");
        }
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sonomyo(&["render", "--bogus"]).status.code(), Some(1));
    assert_eq!(sonomyo(&["frobnicate"]).status.code(), Some(1));
    let missing = dir.path().join("missing.csv");
    let out = dir.path().join("o.wav");
    let o = sonomyo(&["render", "--replay", p(&missing), "--seed", "1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    // offline renders need a seed
    let o = sonomyo(&["render", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sample_rate = 48000\nblock_size = 300\nseed = 1\n").unwrap();
    let o = sonomyo(&["render", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("block_size"), "{}", stderr(&o));
}

#[test]
fn analyze_emits_one_row_per_hop() {
    let dir = tempfile::tempdir().unwrap();
    let replay = synth(dir.path(), "r.csv", "meso", "4", "7.3", "left_arm");
    let n = std::fs::read_to_string(&replay)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("timestamp"))
        .count();
    let rest = synth(dir.path(), "rest.csv", "rest", "1", "5", "left_arm,right_calf");
    let mvc = synth(dir.path(), "mvc.csv", "macro", "2", "5", "left_arm,right_calf");
    let prof = dir.path().join("p.toml");
    let o = sonomyo(&["calibrate", "--rest", p(&rest), "--mvc", p(&mvc), "--out", p(&prof)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let out = dir.path().join("f.csv");
    let o = sonomyo(&["analyze", "--replay", p(&replay), "--calibration", p(&prof), "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(&out).unwrap().lines().count() - 1;
    assert_eq!(rows, (n - 50) / 10 + 1);
}

#[test]
fn calibrate_writes_profile_or_names_channel() {
    let dir = tempfile::tempdir().unwrap();
    let rest = synth(dir.path(), "rest.csv", "rest", "1", "5", "left_arm");
    let mvc = synth(dir.path(), "mvc.csv", "macro", "2", "5", "left_arm");
    let prof = dir.path().join("p.toml");
    let o = sonomyo(&["calibrate", "--rest", p(&rest), "--mvc", p(&mvc), "--out", p(&prof)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&prof).unwrap();
    assert!(text.contains("left_arm") && text.contains("mvc_max"), "{text}");

    // swapped recordings: the contraction is weaker than rest
    let o = sonomyo(&["calibrate", "--rest", p(&mvc), "--mvc", p(&rest), "--out", p(&prof)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("left_arm ch"), "{}", stderr(&o));
}

#[test]
fn render_is_idempotent_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let replay = synth(dir.path(), "r.csv", "macro", "9", "3", "left_arm,right_calf");
    let out = dir.path().join("o.wav");
    let mut renders = Vec::new();
    for _ in 0..2 {
        let o = sonomyo(&["render", "--replay", p(&replay), "--seed", "7", "--scene", "musicking", "--out", p(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        renders.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(renders[0], renders[1]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("o.wav.report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 7);
    assert_eq!(report["faults"], 0);
    assert_eq!(report["scene_timeline"][0]["scene"], "musicking");
    let wav = hound::WavReader::open(&out).unwrap();
    assert_eq!(wav.spec().channels, 2);
    assert_eq!(wav.spec().bits_per_sample, 32);
}

#[test]
fn empty_render_is_silent_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.wav");
    let o = sonomyo(&["render", "--seed", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["warnings"].as_array().unwrap().len(), 1);
    let mut wav = hound::WavReader::open(&out).unwrap();
    assert!(wav.samples::<f32>().all(|s| s.unwrap() == 0.0));
}

#[test]
fn schema_lists_params_and_addresses() {
    let o = sonomyo(&["schema"]);
    assert!(o.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(doc["params"].as_array().unwrap().len(), 28);
    let addrs: Vec<&str> = doc["addresses"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    assert!(addrs.contains(&"/mix/master/gain_db"));
    assert!(addrs.contains(&"/scene"));
    assert!(addrs.iter().any(|a| a.starts_with("/map/edge/")));
}

#[test]
fn run_with_busy_port_exits_2() {
    let taken = UdpSocket::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("c.toml");
    std::fs::write(&cfg, "[osc]\nbind = \"127.0.0.1\"\n[control]\nenabled = false\n").unwrap();
    let o = sonomyo(&["run", "--config", p(&cfg), "--osc-port", &port, "--duration", "0.2"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_stops_after_duration_and_closes_recording() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[osc]\nbind = \"127.0.0.1\"\nport = 0\n[control]\nbind = \"127.0.0.1\"\nport = 0\n").unwrap();
    let rec = dir.path().join("rec.csv");
    let o = sonomyo(&["run", "--config", p(&cfg), "--record", p(&rec), "--duration", "0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&rec).unwrap().trim_end().ends_with("# end"));
}

#[cfg(unix)]
#[test]
fn sigint_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[osc]\nbind = \"127.0.0.1\"\nport = 0\n[control]\nenabled = false\n").unwrap();
    let rec = dir.path().join("rec.csv");
    let mut child = Command::new(env!("CARGO_BIN_EXE_sonomyo"))
        .args(["run", "--config", p(&cfg), "--record", p(&rec)])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    std::thread::sleep(Duration::from_millis(800));
    let k = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(k.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(std::fs::read_to_string(&rec).unwrap().trim_end().ends_with("# end"));
}

#[test]
fn example_config_loads() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example.toml");
    let o = sonomyo(&["schema", "--config", p(&cfg)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let addrs = doc["addresses"].as_array().unwrap();
    assert!(addrs.iter().any(|a| a == "/map/edge/coda.drops/weight"));
}
