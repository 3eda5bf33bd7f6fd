//! CLI surface: exit codes, structured parser errors on the
//! malformed-input corpus, and subcommand round trips.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn boxlift() -> Command {
    Command::new(env!("CARGO_BIN_EXE_boxlift"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("boxlift-cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// A minimal valid sequence: one scan with one point, identity calibration
/// and pose, one decoded detection with a full-frame mask.
fn write_valid_sequence(dir: &Path) {
    std::fs::write(dir.join("calib.txt"), "K: 100 100 32 32\nsize: 64 64\nTr: 1 0 0 0 0 1 0 0 0 0 1 0\n")
        .unwrap();
    std::fs::write(dir.join("poses.txt"), "1 0 0 0 0 1 0 0 0 0 1 0\n").unwrap();
    let mut scan = Vec::new();
    for value in [0.0f32, 0.0, 5.0, 1.0] {
        scan.extend_from_slice(&value.to_le_bytes());
    }
    std::fs::write(dir.join("scan0.bin"), scan).unwrap();
    std::fs::write(dir.join("dets0.txt"), "mode: decoded\nsize: 64 64\ndet: 1 0.9 0 0 64 64 2 0 4096\n")
        .unwrap();
    std::fs::write(
        dir.join("manifest.txt"),
        "calib: calib.txt\nposes: poses.txt\nsize: 64 64\nmode: decoded\nscan: 0 scan0.bin dets0.txt 0\n",
    )
    .unwrap();
}

fn run_on_manifest(dir: &Path) -> Output {
    boxlift()
        .args([
            "run",
            "--manifest",
            dir.join("manifest.txt").to_str().unwrap(),
            "--out-registry",
            dir.join("registry.txt").to_str().unwrap(),
        ])
        .output()
        .expect("boxlift executes")
}

#[test]
fn valid_sequence_runs_clean() {
    let dir = tmpdir("valid");
    write_valid_sequence(&dir);
    let output = run_on_manifest(&dir);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert!(dir.join("registry.txt").exists());
}

#[test]
fn c7_truncated_scan_binary_is_input_error() {
    let dir = tmpdir("truncated-scan");
    write_valid_sequence(&dir);
    std::fs::write(dir.join("scan0.bin"), vec![0u8; 17]).unwrap();
    let output = run_on_manifest(&dir);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("truncated at byte 16"), "stderr: {stderr}");
    assert!(stderr.contains("scan0.bin"), "stderr: {stderr}");
}

#[test]
fn c7_improper_rotation_in_calibration_is_input_error() {
    let dir = tmpdir("improper-rotation");
    write_valid_sequence(&dir);
    std::fs::write(
        dir.join("calib.txt"),
        "K: 100 100 32 32\nsize: 64 64\nTr: 1 0 0 0 0 1 0 0 0 0 -1 0\n",
    )
    .unwrap();
    let output = run_on_manifest(&dir);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("improper rotation"), "stderr: {stderr}");
    assert!(stderr.contains("calib.txt:3"), "stderr: {stderr}");
}

#[test]
fn c7_bad_rle_sum_is_input_error() {
    let dir = tmpdir("bad-rle");
    write_valid_sequence(&dir);
    // Runs sum to 4095 instead of 64*64 = 4096.
    std::fs::write(dir.join("dets0.txt"), "mode: decoded\nsize: 64 64\ndet: 1 0.9 0 0 64 64 2 0 4095\n")
        .unwrap();
    let output = run_on_manifest(&dir);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(
        stderr.contains("RLE runs sum to 4095, expected 4096"),
        "stderr: {stderr}"
    );
}

#[test]
fn c7_wrong_prototype_blob_size_is_input_error() {
    let dir = tmpdir("bad-blob");
    write_valid_sequence(&dir);
    std::fs::write(dir.join("dets0.txt"), "mode: raw\nprotos: protos.bin\n").unwrap();
    std::fs::write(dir.join("protos.bin"), vec![0u8; 1024]).unwrap();
    let output = run_on_manifest(&dir);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
    let stderr = stderr_of(&output);
    assert!(
        stderr.contains("prototype blob is 1024 bytes, expected 3276800"),
        "stderr: {stderr}"
    );
}

#[test]
fn c7_missing_manifest_reference_is_input_error() {
    let dir = tmpdir("missing-ref");
    write_valid_sequence(&dir);
    std::fs::remove_file(dir.join("scan0.bin")).unwrap();
    let output = run_on_manifest(&dir);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr_of(&output));
    assert!(stderr_of(&output).contains("does not exist"), "stderr: {}", stderr_of(&output));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tmpdir("config-error");
    write_valid_sequence(&dir);
    let output = boxlift()
        .args([
            "run",
            "--manifest",
            dir.join("manifest.txt").to_str().unwrap(),
            "--out-registry",
            dir.join("registry.txt").to_str().unwrap(),
            "--conf-threshold",
            "1.5",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr_of(&output));
    assert!(stderr_of(&output).contains("conf-threshold"), "stderr: {}", stderr_of(&output));

    // Unknown flags are also configuration errors (clap convention).
    let output = boxlift().args(["run", "--bogus-flag"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn synth_run_eval_export_round_trip() {
    let dir = tmpdir("round-trip");
    let seq = dir.join("seq");
    let status = boxlift()
        .args([
            "synth",
            "--out",
            seq.to_str().unwrap(),
            "--objects",
            "2",
            "--scans",
            "6",
            "--seed",
            "9",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let registry = dir.join("registry.txt");
    let ply = dir.join("run.ply");
    let records = dir.join("timing.txt");
    let output = boxlift()
        .args([
            "run",
            "--manifest",
            seq.join("manifest.txt").to_str().unwrap(),
            "--out-registry",
            registry.to_str().unwrap(),
            "--out-ply",
            ply.to_str().unwrap(),
            "--timing-records",
            records.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("timing over 6 scans"), "stdout: {stdout}");

    let registry_text = std::fs::read_to_string(&registry).unwrap();
    assert!(registry_text.contains("# config:"), "provenance dump present");
    let records_text = std::fs::read_to_string(&records).unwrap();
    assert!(records_text.contains("timing: layer2"), "records: {records_text}");

    let eval_records = dir.join("eval.txt");
    let output = boxlift()
        .args([
            "eval",
            "--registry",
            registry.to_str().unwrap(),
            "--ground-truth",
            seq.join("ground_truth.txt").to_str().unwrap(),
            "--records",
            eval_records.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("mIoU"), "stdout: {stdout}");
    let eval_text = std::fs::read_to_string(&eval_records).unwrap();
    assert!(eval_text.starts_with("miou:"), "records: {eval_text}");

    // Hungarian protocol is selectable.
    let output = boxlift()
        .args([
            "eval",
            "--registry",
            registry.to_str().unwrap(),
            "--ground-truth",
            seq.join("ground_truth.txt").to_str().unwrap(),
            "--protocol",
            "hungarian",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());

    let ply_text = std::fs::read_to_string(&ply).unwrap();
    assert!(ply_text.starts_with("ply\nformat ascii 1.0\n"));

    // Single-scan export.
    let scan_ply = dir.join("scan.ply");
    let output = boxlift()
        .args([
            "export",
            "--scan",
            seq.join("scans/000000.bin").to_str().unwrap(),
            "--out",
            scan_ply.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert!(std::fs::read_to_string(&scan_ply).unwrap().contains("element vertex"));
}

#[test]
fn convert_kitti_calib_writes_native_format() {
    let dir = tmpdir("convert");
    let kitti = dir.join("kitti_calib.txt");
    std::fs::write(
        &kitti,
        "P2: 7.215377e+02 0.0 6.095593e+02 4.485728e+01 0.0 7.215377e+02 1.728540e+02 2.163791e-01 0.0 0.0 1.0 2.745884e-03\n\
         R0_rect: 0.9999239 0.00983776 -0.00744505 -0.0098698 0.9999421 -0.00427846 0.00740253 0.00435161 0.9999631\n\
         Tr_velo_to_cam: 7.533745e-03 -0.9999714 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -0.9998902 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01\n",
    )
    .unwrap();
    let native = dir.join("native.txt");
    let output = boxlift()
        .args([
            "convert-kitti-calib",
            "--input",
            kitti.to_str().unwrap(),
            "--width",
            "1242",
            "--height",
            "375",
            "--out",
            native.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let text = std::fs::read_to_string(&native).unwrap();
    assert!(text.contains("K: 721.5"), "native: {text}");
    assert!(text.contains("size: 1242 375"));

    // Missing projection key is an input error.
    let output = boxlift()
        .args([
            "convert-kitti-calib",
            "--input",
            kitti.to_str().unwrap(),
            "--projection",
            "P9",
            "--width",
            "1242",
            "--height",
            "375",
            "--out",
            native.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_of(&output).contains("P9"));
}
