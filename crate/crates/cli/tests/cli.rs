use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn synth(dir: &Path, count: usize, seed: u64) {
    let out = sis(&[
        "synth",
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn segment(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let (image, saliency, features, out) = (
        path(dir, "image.ppm"),
        path(dir, "saliency.pgm"),
        path(dir, "features.npy"),
        path(dir, out),
    );
    let mut args = vec![
        "segment",
        "--image",
        &image,
        "--saliency",
        &saliency,
        "--features",
        &features,
        "--out",
        &out,
    ];
    args.extend_from_slice(extra);
    sis(&args)
}

/// Label samples of a 16-bit P5 file written by the CLI.
fn read_labels(file: &Path) -> Vec<u16> {
    let bytes = fs::read(file).unwrap();
    let header_end = {
        // P5\n<w> <h>\n65535\n
        let mut newlines = 0;
        bytes
            .iter()
            .position(|&b| {
                newlines += usize::from(b == b'\n');
                newlines == 3
            })
            .unwrap()
            + 1
    };
    bytes[header_end..]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect()
}

fn eval_report(dir: &Path, pred: &str) -> serde_json::Value {
    let manifest = dir.join("manifest.json");
    fs::write(
        &manifest,
        format!(r#"{{"images": [{{"prediction": "{pred}", "ground_truth": "gt.pgm", "saliency": "saliency.pgm"}}]}}"#),
    )
    .unwrap();
    let out = sis(&["eval", "--manifest", manifest.to_str().unwrap(), "--iou", "0.5", "--iou", "0.7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn two_disk_fixture_is_recovered_exactly() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 2, 4);
    let out = segment(dir.path(), "seg.pgm", &["--k-file", &path(dir.path(), "k.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = eval_report(dir.path(), "seg.pgm");
    assert_eq!(report["ap_r"]["0.50"], 1.0);
    assert_eq!(report["ap_r"]["0.70"], 1.0);
    assert_eq!(report["per_image"][0]["predicted_instances"], 2);

    let conf: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("seg.json")).unwrap()).unwrap();
    assert_eq!(conf["k"], 2);
    assert_eq!(conf["instances"].as_array().unwrap().len(), 2);
}

#[test]
fn single_instance_covers_the_salient_region() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 3, 9);
    let out = segment(dir.path(), "seg.pgm", &["--k", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let seg = read_labels(&dir.path().join("seg.pgm"));
    let gt = read_labels(&dir.path().join("gt.pgm"));
    for (s, g) in seg.iter().zip(&gt) {
        assert_eq!(*s, u16::from(*g > 0));
    }
}

#[test]
fn infeasible_k_exits_2_without_outputs() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 1, 0);
    let out = segment(dir.path(), "seg.pgm", &["--k", "400"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("requested 400 instances"), "{stderr}");
    assert!(!dir.path().join("seg.pgm").exists());
    assert!(!dir.path().join("seg.json").exists());
}

#[test]
fn io_errors_exit_1_without_outputs() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 2, 1);
    fs::remove_file(dir.path().join("features.npy")).unwrap();
    let out = segment(dir.path(), "seg.pgm", &["--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("seg.pgm").exists());

    synth(dir.path(), 2, 1);
    let out = segment(dir.path(), "missing/seg.pgm", &["--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn segmentation_is_bitwise_reproducible() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 4, 21);
    for name in ["a.pgm", "b.pgm"] {
        let out = segment(dir.path(), name, &["--k", "4", "--refine-crf"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.pgm"), read("b.pgm"));
    assert_eq!(read("a.json"), read("b.json"));
}

#[test]
fn synth_is_deterministic_and_consistent() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    synth(a.path(), 3, 7);
    synth(b.path(), 3, 7);
    for f in ["image.ppm", "saliency.pgm", "features.npy", "gt.pgm", "k.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let gt = read_labels(&a.path().join("gt.pgm"));
    assert_eq!(gt.len(), 64 * 64);
    let sal = fs::read(a.path().join("saliency.pgm")).unwrap();
    let sal = &sal[sal.len() - 64 * 64..];
    for (g, s) in gt.iter().zip(sal) {
        assert_eq!(*g > 0, *s == 255);
    }
    for l in 1..=3 {
        assert!(gt.contains(&l));
    }
}

#[test]
fn flags_override_config_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 3, 5);
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"k_override": 1, "n_superpixels": 120}"#).unwrap();
    let cfg = config.to_str().unwrap();

    // config override replaces the sidecar's k
    let out = segment(dir.path(), "c.pgm", &["--config", cfg, "--k-file", &path(dir.path(), "k.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_labels(&dir.path().join("c.pgm")).iter().max(), Some(&1));

    // an explicit --k beats the config
    let out = segment(dir.path(), "f.pgm", &["--config", cfg, "--k", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_labels(&dir.path().join("f.pgm")).iter().max(), Some(&3));

    fs::write(&config, r#"{"superpixel": 10}"#).unwrap();
    let out = segment(dir.path(), "bad.pgm", &["--config", cfg, "--k", "1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn subitizing_class_four_plus_means_four() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 4, 3);
    fs::write(dir.path().join("k4.json"), r#"{"k": "4+"}"#).unwrap();
    let out = segment(dir.path(), "seg.pgm", &["--k-file", &path(dir.path(), "k4.json")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_labels(&dir.path().join("seg.pgm")).iter().max(), Some(&4));
}

#[test]
fn crf_and_slic_write_maps() {
    let dir = TempDir::new().unwrap();
    synth(dir.path(), 2, 8);
    let (image, saliency) = (path(dir.path(), "image.ppm"), path(dir.path(), "saliency.pgm"));
    let refined = path(dir.path(), "refined.npy");
    let out = sis(&["crf", "--image", &image, "--saliency", &saliency, "--out", &refined, "--iters", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&refined).exists());

    let sp = path(dir.path(), "sp.pgm");
    let out = sis(&["slic", "--image", &image, "--out", &sp, "--superpixels", "16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels = read_labels(Path::new(&sp));
    assert_eq!(labels.len(), 64 * 64);
    assert!(*labels.iter().max().unwrap() < 40);
}

#[test]
fn netcheck_passes() {
    let out = sis(&["netcheck"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("ok ")).count(), 5);
}

#[test]
fn eval_rejects_mismatched_shapes() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    synth(a.path(), 1, 0);
    let out = sis(&[
        "synth",
        "--count",
        "1",
        "--size",
        "32",
        "--out-dir",
        b.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    fs::copy(b.path().join("gt.pgm"), a.path().join("small.pgm")).unwrap();
    let manifest = a.path().join("m.json");
    fs::write(&manifest, r#"{"images": [{"prediction": "small.pgm", "ground_truth": "gt.pgm"}]}"#).unwrap();
    let out = sis(&["eval", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}
