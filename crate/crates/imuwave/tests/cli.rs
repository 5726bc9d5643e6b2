use std::path::Path;
use std::process::{Command, Output};

use walkdir::WalkDir;

const SMALL: &[&str] = &[
    "--set",
    "dataset.per_class=3",
    "--set",
    "diffusion.steps=20",
    "--set",
    "diffusion.train_steps=4",
    "--set",
    "classifier.epochs=3",
];

fn run(args: &[&str], dir: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_imuwave")).args(args).current_dir(dir).output().unwrap();
    out
}

fn ok(args: &[&str], dir: &Path) -> String {
    let mut all: Vec<&str> = args.to_vec();
    all.extend_from_slice(SMALL);
    let out = run(&all, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = WalkDir::new(root)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().display().to_string(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selfcheck"], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("config digest: ") && text.contains("master seed: 0"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn usage_and_io_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["synth"], dir.path()).status.code(), Some(1));
    assert_eq!(run(&["synth", "--out", "d", "--set", "radar.nope=1"], dir.path()).status.code(), Some(1));
    let missing = run(&["render", "--in", "missing.irad", "--out", "x.pgm"], dir.path());
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.irad"));
    std::fs::write(dir.path().join("bad.cfg"), "[radar]\nchirps = 12\nwhat\n").unwrap();
    let bad = run(&["selfcheck", "--config", "bad.cfg"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 3"));
}

#[test]
fn end_to_end_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("c.cfg"), "[radar]\nsnr_db = 15\n").unwrap();
    let s1 = ok(&["synth", "--config", "c.cfg", "--out", "a", "--seed", "7"], d);
    ok(&["synth", "--config", "c.cfg", "--out", "b", "--seed", "7"], d);
    assert!(s1.contains("master seed: 7"));
    assert_eq!(tree(&d.join("a")), tree(&d.join("b")));

    ok(&["train-i2r", "--data", "a", "--out", "i1.irad"], d);
    ok(&["train-i2r", "--data", "a", "--out", "i2.irad"], d);
    assert_eq!(std::fs::read(d.join("i1.irad")).unwrap(), std::fs::read(d.join("i2.irad")).unwrap());
    assert_eq!(std::fs::read_to_string(d.join("i1.log")).unwrap().lines().count(), 1 + 4);

    ok(&["train-clf", "--data", "a", "--out", "c1.irad"], d);
    ok(&["train-clf", "--data", "a", "--out", "c2.irad"], d);
    assert_eq!(std::fs::read(d.join("c1.irad")).unwrap(), std::fs::read(d.join("c2.irad")).unwrap());

    let triplet = "a/samples/push_0000/spectrogram.irad";
    ok(&["translate", "--ckpt", "i1.irad", "--in", triplet, "--out", "t1.irad"], d);
    ok(&["translate", "--ckpt", "i1.irad", "--in", triplet, "--out", "t2.irad", "--stride", "5"], d);
    ok(&["translate", "--ckpt", "i1.irad", "--in", triplet, "--out", "t3.irad"], d);
    assert_eq!(std::fs::read(d.join("t1.irad")).unwrap(), std::fs::read(d.join("t3.irad")).unwrap());

    let table = ok(&["eval", "--clf", "c1.irad", "--i2r", "i1.irad", "--data", "a", "--report", "r.json", "--split", "all"], d);
    assert!(table.contains("translated heatmaps"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    for section in report["sections"].as_array().unwrap() {
        let (t1, t2, t3) = (section["top1"].as_f64().unwrap(), section["top2"].as_f64().unwrap(), section["top3"].as_f64().unwrap());
        assert!(t1 <= t2 && t2 <= t3, "{section}");
    }

    ok(&["render", "--in", "a/samples/push_0000/heatmap.irad", "--out", "h.pgm"], d);
    ok(&["render", "--in", triplet, "--out", "s.pgm"], d);
    assert!(std::fs::read(d.join("h.pgm")).unwrap().starts_with(b"P5\n64 64\n255\n"));
    assert!(std::fs::read(d.join("s.pgm")).unwrap().starts_with(b"P5\n45 51\n255\n"));
    ok(&["enhance", "--in", "a/samples/push_0000/raw.irad", "--out", "e.irad", "--mask", "m.irad"], d);
    assert_eq!(std::fs::read(d.join("e.irad")).unwrap(), std::fs::read(d.join("a/samples/push_0000/heatmap.irad")).unwrap());
}
