//! Drives the built `etld` binary end to end on small synthetic sequences.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FIXTURE_ROI: &str = "60,60,40,30";

fn etld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etld"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Short translation sequence written by `etld synth`.
fn synth(dir: &TempDir, duration_ms: &str) -> (PathBuf, PathBuf) {
    let out = dir.path().join("synth");
    let o = etld(&["synth", "--duration-ms", duration_ms, "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (out.join("events.txt"), out.join("annotations.csv"))
}

fn track(events: &Path, ann: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "track",
        "--events",
        s(events),
        "--roi",
        FIXTURE_ROI,
        "--annotations",
        s(ann),
        "--out-dir",
        s(out),
        "--codebook-size",
        "64",
    ];
    args.extend_from_slice(extra);
    etld(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_track_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let (events, ann) = synth(&dir, "1500");
    let out = dir.path().join("track");
    let o = track(&events, &ann, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["track.csv", "transitions.csv", "report.json", "intervals.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = json(&out.join("report.json"));
    let os = report["eval"]["os"].as_f64().unwrap();
    assert!(os >= 0.8, "OS {os}");

    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["codebook_size"], 64);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);

    let o = etld(&["eval", "--track", s(&out.join("track.csv")), "--annotations", s(&ann)]);
    assert_eq!(code(&o), 0);
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(eval["os"].as_f64().unwrap(), os);
    assert_eq!(eval["evaluated"], report["eval"]["evaluated"]);
}

#[test]
fn track_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let (events, ann) = synth(&dir, "1000");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&track(&events, &ann, &a, &[])), 0);
    assert_eq!(code(&track(&events, &ann, &b, &[])), 0);
    for f in ["track.csv", "transitions.csv", "report.json", "intervals.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn zero_offset_sweep_reproduces_track() {
    let dir = TempDir::new().unwrap();
    let (events, ann) = synth(&dir, "1000");
    let t = dir.path().join("track");
    assert_eq!(code(&track(&events, &ann, &t, &[])), 0);
    let sw = dir.path().join("sweep");
    let o = etld(&[
        "sweep",
        "--param",
        "init_offset_percent",
        "--values",
        "0",
        "--events",
        s(&events),
        "--roi",
        FIXTURE_ROI,
        "--annotations",
        s(&ann),
        "--out-dir",
        s(&sw),
        "--codebook-size",
        "64",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let point = sw.join("init_offset_percent_0");
    for f in ["track.csv", "transitions.csv"] {
        assert_eq!(fs::read(t.join(f)).unwrap(), fs::read(point.join(f)).unwrap(), "{f} differs");
    }
    let table = fs::read_to_string(sw.join("sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("value,os,cle"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let os: f64 = row[1].parse().unwrap();
    assert_eq!(format!("{os:.6}"), format!("{:.6}", json(&t.join("report.json"))["eval"]["os"].as_f64().unwrap()));
    assert!(lines.next().is_none());
}

#[test]
fn bench_handles_an_empty_event_file() {
    let dir = TempDir::new().unwrap();
    let events = dir.path().join("empty.txt");
    fs::write(&events, "").unwrap();
    let out = dir.path().join("bench");
    let o = etld(&["bench", "--events", s(&events), "--roi", FIXTURE_ROI, "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("bench.json"));
    assert_eq!(r["events"], 0);
    assert!(r["latency"].is_null());
    assert!(r["meets_target"].is_null());
}

#[test]
fn codebook_command_writes_a_loadable_codebook() {
    let dir = TempDir::new().unwrap();
    let (events, _) = synth(&dir, "600");
    let path = dir.path().join("cb.bin");
    let o = etld(&["codebook", "--events", s(&events), "--out", s(&path), "--codebook-size", "32"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["codebook_size"], 32);
    assert_eq!(summary["dimension"], 60);
    let cb = etld::codebook::Codebook::load(&path).unwrap();
    assert_eq!(cb.k(), 32);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (events, ann) = synth(&dir, "600");
    let out = dir.path().join("out");
    let ev = s(&events);

    assert_eq!(code(&etld(&["--help"])), 0);
    assert_eq!(code(&etld(&["frobnicate"])), 1);
    assert_eq!(code(&etld(&["track", "--events", ev])), 1, "missing --roi");
    assert_eq!(code(&track(&events, &ann, &out, &["--tau", "0"])), 1);
    assert_eq!(code(&track(&events, &ann, &out, &["--overlap-threshold", "1.5"])), 1);

    let missing = dir.path().join("nope.txt");
    let o = etld(&["track", "--events", s(&missing), "--roi", FIXTURE_ROI, "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.txt"));

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0 1 2 1\n10 1 2 x\n").unwrap();
    let o = etld(&["track", "--events", s(&bad), "--roi", FIXTURE_ROI, "--out-dir", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = etld(&["track", "--events", ev, "--roi", "0,0,240,180", "--out-dir", s(&out), "--codebook-size", "16"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = etld(&["track", "--events", ev, "--roi", "200,150,60,60", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 1, "box off the sensor");
}

#[test]
fn synth_rejects_bad_occlusion_windows() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s");
    assert_eq!(code(&etld(&["synth", "--occlude", "500", "--out-dir", s(&out)])), 1);
    let o = etld(&["synth", "--duration-ms", "800", "--occlude", "300-500", "--out-dir", s(&out)]);
    assert_eq!(code(&o), 0);
    let scene = fs::read_to_string(out.join("scene.cfg")).unwrap();
    assert!(scene.contains("300000"), "{scene}");
}
