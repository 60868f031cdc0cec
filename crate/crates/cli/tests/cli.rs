//! Black-box tests of the command-line surface and its exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_invrend")
}

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, kind: &str, prefix: &str, res: usize) -> PathBuf {
    let out = run(
        &[
            "synth",
            "--kind",
            kind,
            "--out-prefix",
            prefix,
            "--res",
            &res.to_string(),
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(format!("{prefix}.vox"))
}

#[test]
fn eval_iou_of_grid_with_itself_is_one() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "sphere", "s", 16);
    let out = run(&["eval-iou", "s.vox", "s.vox"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["iou"], 1.0);
}

#[test]
fn iso_out_of_range_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let vox = synth(dir.path(), "box", "b", 8);
    let out = run(
        &["extract", vox.to_str().unwrap(), "out.obj", "--iso", "1.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eval-iou", "a.vox", "b.vox", "--bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
}

#[test]
fn bad_magic_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("junk.vox"), b"XOVL 2 1\n").unwrap();
    let out = run(&["eval-iou", "junk.vox", "junk.vox"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}

#[test]
fn fscore_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "torus", "t", 16);
    let a = run(
        &["eval-fscore", "t.obj", "t.obj", "--points", "500", "--seed", "7"],
        dir.path(),
    );
    let b = run(
        &["eval-fscore", "t.obj", "t.obj", "--points", "500", "--seed", "7"],
        dir.path(),
    );
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn align_reports_a_single_json_object() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "box-plus-bump", "p", 16);
    let out = run(
        &["align", "p.vox", "p.vox", "--az-steps", "4", "--thresholds", "0.3,0.5"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let v: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(v["iou"], 1.0);
    assert_eq!(v["azimuth_deg"], 0.0);
}

#[test]
fn refinement_is_bitwise_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "box", "b", 16);
    let render = run(
        &[
            "render-volume",
            "b.vox",
            "--az",
            "40",
            "--el",
            "10",
            "--size",
            "32x32",
            "--out-image",
            "t.ppm",
            "--out-mask",
            "t.pgm",
        ],
        d,
    );
    assert!(render.status.success());
    let extract = run(&["extract", "b.vox", "init.obj"], d);
    assert!(extract.status.success());
    std::fs::write(d.join("cfg.json"), r#"{"K": 1, "inner_steps": 8}"#).unwrap();

    let refined = |threads: &str, out: &str| {
        let status = Command::new(bin())
            .args([
                "refine", "init.obj", "t.ppm", "t.pgm", "--az", "40", "--el", "10", "--size",
                "32x32", "--config", "cfg.json", "--out-obj", out,
            ])
            .env("RAYON_NUM_THREADS", threads)
            .current_dir(d)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(d.join(out)).unwrap()
    };
    let a = refined("1", "a.obj");
    let b = refined("7", "b.obj");
    assert_eq!(a, b, "refinement output must not depend on the thread count");
}

#[test]
fn render_volume_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "sphere", "s", 16);
    let out = run(
        &[
            "render-volume",
            "s.vox",
            "--color",
            "s.rgb.vox",
            "--az",
            "30",
            "--el",
            "10",
            "--size",
            "32x32",
            "--out-image",
            "v.ppm",
            "--out-mask",
            "v.pgm",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("v.ppm").exists());
    assert!(dir.path().join("v.pgm").exists());
}
