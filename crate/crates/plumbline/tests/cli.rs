//! End-to-end tests of the `plumbline` binary: exit-code contract,
//! subcommand output shapes, and file-format round trips through the
//! loaders.

use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_plumbline"))
}

fn write_sequence_fixture(path: &Path, tilts_deg: &[f64]) {
    // tilt = arccos(g_z); keep everything unit and consistent.
    let mut body = String::from(
        "t,ggt_x,ggt_y,ggt_z,gprior_x,gprior_y,gprior_z,prior_error_deg,nongravity_ratio,tilt_deg\n",
    );
    for (i, tilt) in tilts_deg.iter().enumerate() {
        let rad = tilt.to_radians();
        let (s, c) = rad.sin_cos();
        body.push_str(&format!(
            "{},{s},0,{c},{s},0,{c},0,0.01,{tilt}\n",
            i as f64 / 30.0
        ));
    }
    std::fs::write(path, body).unwrap();
}

#[test]
fn stats_counts_tilt_bins() {
    let dir = TempDir::new().unwrap();
    let seq = dir.path().join("seq.csv");
    write_sequence_fixture(&seq, &[30.0, 90.0, 150.0]);

    let out = bin()
        .args(["stats", seq.to_str().unwrap(), "--edges", "0,60,120,180", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["tilt_counts"], serde_json::json!([1, 1, 1]));
    assert_eq!(parsed["total_frames"], 3);
}

#[test]
fn gradcheck_passes_and_reports() {
    let out = bin().args(["gradcheck", "--seed", "7", "--json"]).output().unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let max_rel = parsed["max_rel_err"].as_f64().unwrap();
    assert!(max_rel < 1e-4, "gradcheck reported {max_rel}");
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "expected usage text, got: {stderr}");
}

#[test]
fn help_exits_clean() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("gradcheck"));
}

#[test]
fn missing_file_is_data_error() {
    let out = bin()
        .args(["stats", "/nonexistent/path/seq.csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn align_rejects_insufficient_pairs_as_numeric_error() {
    let dir = TempDir::new().unwrap();
    let pairs = dir.path().join("pairs.csv");
    std::fs::write(&pairs, "gcam_x,gcam_y,gcam_z,gimu_x,gimu_y,gimu_z\n0,0,1,0,0,1\n").unwrap();
    let out = bin()
        .args([
            "align",
            "--pairs",
            pairs.to_str().unwrap(),
            "--out",
            dir.path().join("rot.json").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

/// The full desk pipeline: synth -> train -> eval -> tilt-report ->
/// gate-diag, all outputs re-readable.
#[test]
fn pipeline_smoke_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let data_dir = dir.path().join("data");
    let model = dir.path().join("model.gckp");
    let history = dir.path().join("history.csv");

    let out = bin()
        .args(["synth", "--out-dir", data_dir.to_str().unwrap()])
        .args(["--set", "c=12", "--set", "n_train=600", "--set", "n_val=150"])
        .args(["--set", "distractor_dims=3", "--set", "data_seed=5"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // Deterministic regeneration: same seed, same bytes.
    let first = std::fs::read(data_dir.join("train.csv")).unwrap();
    let out = bin()
        .args(["synth", "--out-dir", data_dir.to_str().unwrap()])
        .args(["--set", "c=12", "--set", "n_train=600", "--set", "n_val=150"])
        .args(["--set", "distractor_dims=3", "--set", "data_seed=5"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(first, std::fs::read(data_dir.join("train.csv")).unwrap());

    let out = bin()
        .args(["train", "--data-dir", data_dir.to_str().unwrap()])
        .args(["--out", model.to_str().unwrap()])
        .args(["--history", history.to_str().unwrap()])
        .args(["--set", "epochs=3", "--set", "batch=32", "--set", "lr_heads=1e-3"])
        .args(["--set", "h_prior=6", "--set", "h_head=12", "--set", "h_img=12"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
    let history_text = std::fs::read_to_string(&history).unwrap();
    assert_eq!(history_text.lines().count(), 4, "header plus one row per epoch");

    let out = bin()
        .args(["eval", "--model", model.to_str().unwrap()])
        .args(["--data", data_dir.join("val.csv").to_str().unwrap(), "--json"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for method in ["assume-upright", "prior", "corrected", "image-only", "fused"] {
        assert!(report[method]["mean"].is_f64(), "missing row {method}");
    }
    assert_eq!(report["prior"]["count"], 150);

    let out = bin()
        .args(["tilt-report", "--model", model.to_str().unwrap()])
        .args(["--data", data_dir.join("val.csv").to_str().unwrap()])
        .args(["--edges", "0,60,120,180", "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let counts: i64 = report["counts"].as_array().unwrap().iter().map(|c| c.as_i64().unwrap()).sum();
    assert_eq!(counts, 150);

    let out = bin()
        .args(["gate-diag", "--model", model.to_str().unwrap()])
        .args(["--data", data_dir.join("val.csv").to_str().unwrap(), "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["by_prior_error"]["counts"].is_array());
    assert!(report["by_nongravity_ratio"]["counts"].is_array());
}

#[test]
fn extract_and_mahony_run_on_fixture() {
    let dir = TempDir::new().unwrap();
    let rec = dir.path().join("rec");
    std::fs::create_dir_all(&rec).unwrap();

    let mut odometry = String::from("t,x,y,z,qx,qy,qz,qw\n");
    let mut imu = String::from("t,a_x,a_y,a_z,alpha_x,alpha_y,alpha_z\n");
    for i in 0..120 {
        let t = i as f64 / 30.0;
        let a: f64 = 0.3 * t;
        odometry.push_str(&format!(
            "{t},0,0,0,{},0,0,{}\n",
            (a / 2.0).sin(),
            (a / 2.0).cos()
        ));
    }
    for i in 0..1600 {
        let t = i as f64 / 400.0;
        let a: f64 = 0.3 * t;
        imu.push_str(&format!(
            "{t},0,{},{},0.3,0,0\n",
            a.sin() * 9.81,
            a.cos() * 9.81
        ));
    }
    std::fs::write(rec.join("odometry.csv"), odometry).unwrap();
    std::fs::write(rec.join("imu.csv"), imu).unwrap();
    std::fs::write(
        rec.join("camera_matrix.csv"),
        "fx,fy,cx,cy,k1,k2,p1,p2,k3,width,height\n1000,1000,960,720,0,0,0,0,0,1920,1440\n",
    )
    .unwrap();

    let out_dir = dir.path().join("seq");
    let out = bin()
        .args(["extract", rec.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // The sequence CSV re-reads through the stats command.
    let out = bin()
        .args(["stats", out_dir.join("rec.csv").to_str().unwrap(), "--json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["total_frames"], 120);

    let grav = dir.path().join("gravity.csv");
    let out = bin()
        .args(["mahony", "--imu", rec.join("imu.csv").to_str().unwrap()])
        .args(["--out", grav.to_str().unwrap(), "--rate", "10"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&grav).unwrap().lines().count() > 30);
}

#[test]
fn remap_output_is_loadable_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let intr = dir.path().join("camera_matrix.csv");
    std::fs::write(
        &intr,
        "fx,fy,cx,cy,k1,k2,p1,p2,k3,width,height\n1000,1000,960,720,0.1,0,0,0,0,1920,1440\n",
    )
    .unwrap();
    let a = dir.path().join("a.grmp");
    let b = dir.path().join("b.grmp");
    for out_path in [&a, &b] {
        let out = bin()
            .args(["remap", "--intrinsics", intr.to_str().unwrap()])
            .args(["--out", out_path.to_str().unwrap(), "--out-size", "64x48"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap());
    assert_eq!(&bytes_a[0..4], b"GRMP");
}
