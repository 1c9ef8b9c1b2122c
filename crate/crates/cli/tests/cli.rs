//! Behavioral tests of the command-line surface: exit codes, error
//! messages, file outputs, and cross-command round trips.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn csuq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_csuq"))
}

fn read_json(path: &Path) -> Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    serde_json::from_str(&text)
        .unwrap_or_else(|e| panic!("{} is not valid JSON: {e}", path.display()))
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn a_missing_input_file_fails_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-image.csv");
    let output = csuq()
        .args(["reconstruct", "--input"])
        .arg(&missing)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = stderr_of(&output);
    assert!(
        err.contains("no-such-image.csv"),
        "stderr does not name the missing file: {err}"
    );
}

#[test]
fn an_unsupported_input_extension_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("image.bmp");
    fs::write(&bad, "not an image").unwrap();
    let output = csuq()
        .args(["reconstruct", "--input"])
        .arg(&bad)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = stderr_of(&output);
    assert!(err.contains("image.bmp"), "{err}");
    assert!(err.contains(".pgm or .csv"), "{err}");
}

#[test]
fn a_command_without_a_ground_truth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let output = csuq()
        .args(["table", "--p", "64", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = stderr_of(&output);
    assert!(err.contains("--input") && err.contains("--phantom"), "{err}");
}

#[test]
fn noiseless_full_sampling_reconstruction_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = csuq()
        .args([
            "reconstruct",
            "--p",
            "1024",
            "--phantom",
            "s0=10",
            "--sigma",
            "0",
            "--sigma-known",
            "false",
            "--n-frac",
            "1",
            "--sampling",
            "distinct",
            "--lambda-multiple",
            "0",
            "--seed",
            "5",
            "--plots",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["metrics"]["h"].as_f64().unwrap(), 1.0);
    assert_eq!(metrics["metrics"]["h_s0"].as_f64().unwrap(), 1.0);
    assert!(metrics["metrics"]["ssim"].as_f64().unwrap() >= 1.0 - 1e-9);
    assert_eq!(metrics["config"]["p"].as_u64().unwrap(), 1024);

    for file in [
        "manifest.json",
        "beta_hat.csv",
        "beta_u.csv",
        "regions.csv",
        "trace.csv",
        "reconstruction.svg",
        "intervals.svg",
    ] {
        assert!(out.join(file).exists(), "missing output {file}");
    }
    let regions = fs::read_to_string(out.join("regions.csv")).unwrap();
    assert!(regions.starts_with("coordinate,re_center,im_center,radius\n"));
    assert_eq!(regions.lines().count(), 1025);
}

#[test]
fn diagnostics_reports_machine_exact_structure_at_full_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = csuq()
        .args([
            "diagnostics",
            "--p",
            "16",
            "--phantom",
            "s0=2",
            "--sigma",
            "0",
            "--sigma-known",
            "false",
            "--n-frac",
            "1",
            "--sampling",
            "distinct",
            "--trials",
            "4",
            "--seed",
            "11",
            "--out",
        ])
        .arg(&out)
        .env("CSUQ_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());

    let report = read_json(&out.join("diagnostics.json"));
    // Full distinct sampling makes the remainder and the isometry defect
    // vanish to machine precision, and the disks always cover the truth.
    assert!(report["trial"]["r_linf"].as_f64().unwrap() <= 1e-8);
    assert!(report["trial"]["residual_linf"].as_f64().unwrap() <= 1e-8);
    assert_eq!(report["coverage"]["overall"].as_f64().unwrap(), 1.0);
    assert_eq!(report["coverage"]["on_support"].as_f64().unwrap(), 1.0);
    assert!(report["isometry"]["delta"].as_f64().unwrap() <= 1e-10);
    assert_eq!(report["isometry"]["s"].as_u64().unwrap(), 2);
    let decay = report["remainder_decay"].as_array().unwrap();
    let ns: Vec<u64> = decay.iter().map(|pt| pt["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, vec![3, 6, 13]);
    assert!(report["error_constants"]["l2"].as_f64().unwrap().is_finite());
}

#[test]
fn a_phantom_can_be_reconstructed_from_its_saved_image() {
    let dir = tempfile::tempdir().unwrap();
    let ph = dir.path().join("ph");
    let status = csuq()
        .args([
            "phantom", "--p", "256", "--phantom", "s0=6", "--seed", "21", "--plots", "--out",
        ])
        .arg(&ph)
        .status()
        .unwrap();
    assert!(status.success());
    for file in ["ground_truth.csv", "image.csv", "support.csv", "phantom.svg"] {
        assert!(ph.join(file).exists(), "missing output {file}");
    }
    let support = fs::read_to_string(ph.join("support.csv")).unwrap();
    assert_eq!(support.lines().count(), 7, "header plus six support rows");

    let out = dir.path().join("rec");
    let status = csuq()
        .args(["reconstruct", "--input"])
        .arg(ph.join("image.csv"))
        .args([
            "--threshold",
            "200",
            "--sigma",
            "5",
            "--n-frac",
            "0.6",
            "--seed",
            "21",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metrics = read_json(&out.join("metrics.json"));
    // The saved magnitudes all lie in [300, 900], so threshold 200 keeps
    // exactly the phantom's support, and every kept coordinate is covered.
    assert_eq!(metrics["config"]["p"].as_u64().unwrap(), 256);
    assert_eq!(metrics["metrics"]["hits_s0"].as_u64().unwrap(), 6);
}

#[test]
fn flags_override_the_settings_file_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    let out = dir.path().join("out");
    fs::write(
        &conf,
        "p = 64\nphantom = s0=3\nsigma = 7\nseed = 9\ntrials = 2\nn-frac = 0.5\n",
    )
    .unwrap();
    let status = csuq()
        .args(["trials", "--config"])
        .arg(&conf)
        .args(["--sigma", "11", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"].as_str().unwrap(), "trials");
    assert_eq!(manifest["config"]["sigma"].as_f64().unwrap(), 11.0);
    assert_eq!(manifest["config"]["master_seed"].as_u64().unwrap(), 9);
    assert_eq!(manifest["config"]["trials"].as_u64().unwrap(), 2);
    assert_eq!(manifest["config"]["phantom_s0"].as_u64().unwrap(), 3);

    let experiment = read_json(&out.join("experiment.json"));
    assert_eq!(experiment["per_trial"].as_array().unwrap().len(), 2);
    assert!(out.join("trials.csv").exists());
    assert!(out.join("reconstruction.csv").exists());
}
