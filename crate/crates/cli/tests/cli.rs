use std::path::Path;
use std::process::{Command, Output};

use anchorlab::synth::{generate_ground_truth, write_label_frames};
use anchorlab::ImageDims;

fn anchorlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anchorlab"))
        .args(args)
        .env_remove("ANCHORLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn labels(dir: &Path) {
    write_label_frames(dir, &generate_ground_truth(10, 4, ImageDims::KITTI, 3)).unwrap();
}

#[test]
fn help_for_every_subcommand() {
    let out = anchorlab(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for sub in ["validate", "anchors", "netinfo", "eval", "synth"] {
        assert!(stdout(&out).contains(sub), "{sub} missing from top-level help");
        let out = anchorlab(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(stdout(&out).contains("Usage:"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let missing = missing.to_str().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["netinfo", "--net", "vgg16", "--bogus"],
        vec!["netinfo", "--net", "resnet"],
        vec!["netinfo", "--net", "vgg16", "--layer", "conv9_9"],
        vec!["netinfo", "--net", "vgg16", "--input", "224by224"],
        vec!["eval", "--gt", missing, "--det", missing],
        vec!["validate", missing],
        vec!["anchors", "--labels", missing],
        vec!["synth", "--gt", missing, "--out", missing],
        vec!["--threads", "0", "netinfo", "--net", "vgg16"],
    ] {
        let out = anchorlab(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn synth_without_destination_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    labels(&gt);
    let out = anchorlab(&["synth", "--gt", gt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    labels(&gt);
    std::fs::write(gt.join("999999.txt"), "Car 0 0 -10 1 2 3\n").unwrap();
    let gt = gt.to_str().unwrap();

    let out = anchorlab(&["validate", gt]);
    assert_eq!(out.status.code(), Some(2));
    let text = stdout(&out);
    assert!(text.contains("999999.txt,invalid"), "{text}");
    assert!(String::from_utf8_lossy(&out.stderr).contains("999999.txt"));

    assert_eq!(anchorlab(&["eval", "--gt", gt, "--det", gt]).status.code(), Some(2));
    assert_eq!(anchorlab(&["anchors", "--labels", gt]).status.code(), Some(2));
}

#[test]
fn validate_counts_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    labels(&gt);
    let out = anchorlab(&["--format", "text", "validate", gt.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("files 10  valid 10  invalid 0  objects 40"), "{text}");
    assert!(text.contains("Car"), "{text}");
}

#[test]
fn netinfo_vgg16_224() {
    let out = anchorlab(&["netinfo", "--net", "vgg16", "--input", "224x224"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let row = |layer: &str| {
        text.lines()
            .find(|l| l.starts_with(&format!("{layer},")))
            .unwrap_or_else(|| panic!("no {layer} row"))
            .split(',')
            .map(str::to_string)
            .collect::<Vec<_>>()
    };
    assert_eq!(row("conv5_3")[2..6], ["14", "14", "512", "16"]);
    assert_eq!(row("pool5")[2..4], ["7", "7"]);

    let text = stdout(&anchorlab(&[
        "--format", "text", "netinfo", "--net", "vgg16", "--layer", "conv5_3",
    ]));
    assert!(
        text.lines().any(|l| l.starts_with("conv5_3") && l.contains("14x14")),
        "{text}"
    );
    assert!(!text.contains("pool5"));
}

#[test]
fn anchors_nine_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    let out_dir = tmp.path().join("out");
    labels(&gt);
    let out = anchorlab(&[
        "anchors",
        "--labels",
        gt.to_str().unwrap(),
        "--k",
        "9",
        "--seed",
        "1",
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("width,height"));
    assert_eq!(lines.count(), 9);
    assert_eq!(std::fs::read_to_string(out_dir.join("anchors.csv")).unwrap(), text);
    let scatter = std::fs::read_to_string(out_dir.join("observations.csv")).unwrap();
    assert_eq!(scatter.lines().count(), 41);
}

#[test]
fn synth_then_eval_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let gt = tmp.path().join("gt");
    let det = tmp.path().join("det");
    let out_dir = tmp.path().join("out");
    labels(&gt);
    let synth = anchorlab(&["synth", "--gt", gt.to_str().unwrap(), "--out", det.to_str().unwrap()]);
    assert_eq!(synth.status.code(), Some(0));
    assert_eq!(stdout(&synth), "frames,detections\n10,40\n");

    let out = anchorlab(&[
        "--format",
        "text",
        "--output-dir",
        out_dir.to_str().unwrap(),
        "eval",
        "--gt",
        gt.to_str().unwrap(),
        "--det",
        det.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(
        stdout(&out).contains("AP easy/moderate/hard: 1.000/1.000/1.000"),
        "{}",
        stdout(&out)
    );
    for bin in ["easy", "moderate", "hard"] {
        let pr = std::fs::read_to_string(out_dir.join(format!("pr_{bin}.csv"))).unwrap();
        assert!(pr.starts_with("threshold,recall,precision\n"));
    }
}

#[test]
fn json_output_parses() {
    let out = anchorlab(&["--format", "json", "netinfo", "--net", "alexnet"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["net"], "alexnet");
    let layers = v["layers"].as_array().unwrap();
    assert_eq!(layers.last().unwrap()["layer"], "pool5");
    assert_eq!(layers.last().unwrap()["width"], 6);
}
