//! End-to-end behaviour of the `lawave` binary on tiny inputs.

use std::path::Path;
use std::process::{Command, Output};

fn lawave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lawave"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lawave(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> String {
    let out = lawave(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "one-line diagnostic expected: {err}");
    err
}

const QUICK_TRAIN: &str =
    r#"{"epochs":1,"batch_size":2,"learning_rate":0.002,"warmup_steps":1,"validation_fraction":0.25,"patience":5}"#;

#[test]
fn generate_is_reproducible_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        d,
        &[
            "generate",
            "--phantoms",
            "3",
            "--size",
            "32",
            "--seed",
            "4",
            "--out",
            "a",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--phantoms",
            "3",
            "--size",
            "32",
            "--seed",
            "4",
            "--out",
            "b",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--phantoms",
            "3",
            "--size",
            "32",
            "--seed",
            "5",
            "--out",
            "c",
        ],
    );
    let files = |p: &str| {
        let mut v = Vec::new();
        let mut stack = vec![d.join(p)];
        while let Some(dir) = stack.pop() {
            for e in std::fs::read_dir(dir).unwrap() {
                let path = e.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    v.push((
                        path.strip_prefix(d.join(p)).unwrap().to_owned(),
                        std::fs::read(&path).unwrap(),
                    ));
                }
            }
        }
        v.sort();
        v
    };
    assert_eq!(files("a"), files("b"));
    assert_ne!(files("a"), files("c"));
}

#[test]
fn reconstruct_writes_image_and_decreasing_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--phantoms", "1", "--size", "32", "--out", "ph"]);
    ok(d, &["simulate", "--in", "ph", "--noise", "0.02", "--out", "sino"]);
    std::fs::write(d.join("solver.json"), r#"{"iterations": 40}"#).unwrap();
    ok(
        d,
        &[
            "reconstruct",
            "--sino",
            "sino/phantom_000.bin",
            "--solver",
            "solver.json",
            "--out",
            "rec",
        ],
    );
    for f in ["reco.bin", "reco.pgm", "trace.csv"] {
        assert!(d.join("rec").join(f).exists(), "{f} missing");
    }
    let trace = std::fs::read_to_string(d.join("rec/trace.csv")).unwrap();
    let obj: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(obj.len(), 41);
    assert!(obj.last().unwrap() < &obj[0]);
}

#[test]
fn full_workflow_on_a_small_volume() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("train.json"), QUICK_TRAIN).unwrap();
    ok(d, &["generate", "--phantoms", "4", "--size", "32", "--out", "ph"]);
    let out = ok(
        d,
        &[
            "train",
            "--network",
            "n1",
            "--data",
            "ph",
            "--config",
            "train.json",
            "--out",
            "n1.w",
        ],
    );
    assert!(out.contains("validation dice"));
    assert!(d.join("n1.w.log.csv").exists());
    ok(
        d,
        &[
            "train",
            "--network",
            "n2",
            "--data",
            "ph",
            "--config",
            "train.json",
            "--out",
            "n2.w",
        ],
    );

    ok(d, &["generate", "--size", "32", "--balls", "--out", "vol"]);
    ok(d, &["simulate", "--in", "vol", "--out", "vs"]);
    let run = |out: &str, jobs: &str| {
        ok(
            d,
            &[
                "pipeline",
                "--volume",
                "vs",
                "--slices",
                "9,16",
                "--weights-n1",
                "n1.w",
                "--weights-n2",
                "n2.w",
                "--jobs",
                jobs,
                "--out",
                out,
            ],
        );
    };
    run("r1", "1");
    run("r2", "2");
    for f in [
        "slice_009/boundary.png",
        "slice_016/masks/skeleton.bin",
        "slice_016/reco.bin",
    ] {
        assert_eq!(
            std::fs::read(d.join("r1").join(f)).unwrap(),
            std::fs::read(d.join("r2").join(f)).unwrap(),
            "{f} depends on the thread count"
        );
    }
    let out = ok(
        d,
        &[
            "evaluate",
            "--results",
            "r1",
            "--truth",
            "vol",
            "--out",
            "r1/report.json",
        ],
    );
    assert!(out.contains("mean DSC"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("r1/report.json")).unwrap()).unwrap();
    assert_eq!(report["slices"].as_array().unwrap().len(), 2);
    assert!(report["inputs"]["truth/volume.bin"].as_str().unwrap().len() == 64);
    assert!(d.join("r1/report.md").exists());
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fails_with(d, &["generate", "--phantoms", "2", "--size", "30", "--out", "x"], 2);
    fails_with(d, &["reconstruct", "--sino", "missing.bin", "--out", "r"], 3);
    std::fs::write(d.join("garbage.bin"), b"not a sinogram").unwrap();
    fails_with(d, &["reconstruct", "--sino", "garbage.bin", "--out", "r"], 3);

    ok(d, &["generate", "--phantoms", "1", "--size", "32", "--out", "ph"]);
    ok(d, &["simulate", "--in", "ph", "--out", "sino"]);
    let err = fails_with(
        d,
        &[
            "pipeline",
            "--sino",
            "sino/phantom_000.bin",
            "--weights-n1",
            "nowhere.w",
            "--weights-n2",
            "n.w",
            "--out",
            "o",
        ],
        2,
    );
    assert!(err.contains("nowhere.w"), "{err}");
    std::fs::write(d.join("bad.json"), r#"{"iterations": 10, "colour": 3}"#).unwrap();
    fails_with(
        d,
        &[
            "reconstruct",
            "--sino",
            "sino/phantom_000.bin",
            "--solver",
            "bad.json",
            "--out",
            "r",
        ],
        2,
    );
    std::fs::write(d.join("neg.json"), r#"{"mu": -1.0}"#).unwrap();
    fails_with(
        d,
        &[
            "reconstruct",
            "--sino",
            "sino/phantom_000.bin",
            "--solver",
            "neg.json",
            "--out",
            "r",
        ],
        2,
    );
}
