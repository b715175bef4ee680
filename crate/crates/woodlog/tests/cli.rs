//! Black-box tests of the command-line surface: exit codes, report format,
//! and byte-identical reruns of seeded commands.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_woodlog"))
}

fn forge(dir: &Path, seed: u64) -> Output {
    bin()
        .args(["forge", "--per-k", "2", "--k-min", "2", "--k-max", "3"])
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn unknown_subcommand_exits_2() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_required_flag_exits_2() {
    let out = bin().arg("forge").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_0() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn malformed_config_exits_3_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "this is not = [valid toml").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("resolution")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn invalid_config_value_exits_3_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[raster]\ngrid = 0\n").unwrap();
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("resolution")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("grid"),
        "diagnostic should name the field: {err}"
    );
}

#[test]
fn missing_manifest_exits_1() {
    let out = bin()
        .args(["split", "--manifest", "/nonexistent/manifest.json"])
        .args(["--seed", "1", "--out", "/tmp/unused.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn truncated_wlog_is_an_error_not_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.wlog");
    std::fs::write(&bad, b"WLOG\x01\x00").unwrap();
    let out = bin()
        .arg("sequence")
        .arg("--volume")
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn seeded_pipeline_reruns_byte_identically() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [d1.path(), d2.path()] {
        let out = forge(d, 99);
        assert!(out.status.success(), "forge failed: {out:?}");
        let out = bin()
            .arg("voxelize")
            .arg("--manifest")
            .arg(d.join("manifest.json"))
            .args(["--id", "log-2k-0000"])
            .arg("--out")
            .arg(d)
            .output()
            .unwrap();
        assert!(out.status.success(), "voxelize failed: {out:?}");
    }
    for name in [
        "manifest.json",
        "log-2k-0000.input.wlog",
        "log-2k-0000.target.wlog",
    ] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
}

#[test]
fn reports_are_name_value_lines() {
    let out = bin().arg("resolution").output().unwrap();
    assert!(out.status.success());
    for line in String::from_utf8(out.stdout).unwrap().lines() {
        let mut parts = line.splitn(2, ' ');
        assert!(parts.next().is_some_and(|k| !k.is_empty()));
        assert!(
            parts.next().is_some_and(|v| !v.is_empty()),
            "bad line {line:?}"
        );
    }
}

#[test]
fn full_detection_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = forge(dir.path(), 4);
    assert!(out.status.success());
    let manifest = dir.path().join("manifest.json");

    let gt = dir.path().join("gt.jsonl");
    let out = bin()
        .arg("detect")
        .arg("--manifest")
        .arg(&manifest)
        .args(["--log", "log-2k-0000", "--ground-truth", "--size", "256"])
        .arg("--out")
        .arg(&gt)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "detect --ground-truth failed: {out:?}"
    );

    let out = bin()
        .arg("voxelize")
        .arg("--manifest")
        .arg(&manifest)
        .args(["--id", "log-2k-0000"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());

    let dets = dir.path().join("dets.jsonl");
    let out = bin()
        .arg("detect")
        .arg("--volume")
        .arg(dir.path().join("log-2k-0000.target.wlog"))
        .args(["--log", "log-2k-0000"])
        .arg("--out")
        .arg(&dets)
        .output()
        .unwrap();
    assert!(out.status.success(), "detect failed: {out:?}");

    let tracked = dir.path().join("tracked.jsonl");
    let out = bin()
        .arg("track")
        .arg("--detections")
        .arg(&dets)
        .arg("--out")
        .arg(&tracked)
        .output()
        .unwrap();
    assert!(out.status.success(), "track failed: {out:?}");

    let out = bin()
        .arg("eval-map")
        .arg("--preds")
        .arg(&tracked)
        .arg("--gt")
        .arg(&gt)
        .output()
        .unwrap();
    assert!(out.status.success(), "eval-map failed: {out:?}");
    let ap: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((0.0..=1.0).contains(&ap), "AP {ap} out of range");
}
