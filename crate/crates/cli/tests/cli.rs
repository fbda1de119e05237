//! End-to-end tests of the `gpr-recon` binary: exit codes, artifact layout,
//! and seed-idempotent outputs.

use std::path::Path;
use std::process::{Command, Output};

fn gpr_recon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpr-recon"))
        .args(args)
        .output()
        .expect("spawn gpr-recon")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn help_exits_zero() {
    let out = gpr_recon(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("simulate"));
}

#[test]
fn usage_errors_exit_two() {
    // unknown flag, rejected by the parser
    let out = gpr_recon(&["simulate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    // parseable but incoherent invocations
    let dir = tempfile::tempdir().unwrap();
    let out = gpr_recon(&["simulate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
    let out = gpr_recon(&[
        "reconstruct",
        "--bscans",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{:?}", out);
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = gpr_recon(&[
        "migrate",
        "--bscan",
        dir.path().join("missing.gprb").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{:?}", out);
}

#[test]
fn demo_simulation_writes_expected_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("demo");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--demo",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
    ]));
    // 2 m slab at 0.2 m line spacing -> 11 scan lines
    for li in 0..11 {
        assert!(out_dir.join(format!("bscan_{li:02}.gprb")).exists());
        assert!(out_dir.join(format!("gt_{li:02}.gprc")).exists());
    }
    assert!(!out_dir.join("bscan_11.gprb").exists());
    assert!(out_dir.join("dense.ply").exists());
    assert!(out_dir.join("scene.txt").exists());
    let manifest = String::from_utf8(read(&out_dir.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("command simulate"));
    assert!(manifest.contains("seed 7"));
    assert!(manifest.contains("config_hash "));
}

#[test]
fn same_seed_reproduces_artifacts_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_ok(&gpr_recon(&[
            "simulate",
            "--demo",
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
        ]));
    }
    for name in ["bscan_00.gprb", "bscan_10.gprb", "gt_05.gprc", "dense.ply", "scene.txt"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs");
    }
}

#[test]
fn dataset_mode_generates_numbered_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--count",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
        "--line-spacing",
        "0.5",
        "--trace-spacing",
        "0.05",
    ]));
    for i in 0..2 {
        assert!(out_dir.join(format!("scene_{i:03}.txt")).exists());
        assert!(out_dir.join(format!("sparse_{i:03}.ply")).exists());
        assert!(out_dir.join(format!("dense_{i:03}.ply")).exists());
        assert!(out_dir.join(format!("bscan_{i:03}_00.gprb")).exists());
    }
    assert!(!out_dir.join("scene_002.txt").exists());
}

#[test]
fn migrate_and_export_round() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_ok(&gpr_recon(&["simulate", "--demo", "--out", sim.to_str().unwrap()]));
    let mig = dir.path().join("mig");
    assert_ok(&gpr_recon(&[
        "migrate",
        "--bscan",
        sim.join("bscan_00.gprb").to_str().unwrap(),
        "--out",
        mig.to_str().unwrap(),
    ]));
    assert!(mig.join("image.gprc").exists());
    assert!(mig.join("mask.gprc").exists());

    // mask -> PLY, energy image -> CSV
    let mask_ply = dir.path().join("mask.ply");
    assert_ok(&gpr_recon(&[
        "export",
        "--input",
        mig.join("mask.gprc").to_str().unwrap(),
        "--out",
        mask_ply.to_str().unwrap(),
    ]));
    assert!(String::from_utf8(read(&mask_ply)).unwrap().starts_with("ply"));
    let img_csv = dir.path().join("image.csv");
    assert_ok(&gpr_recon(&[
        "export",
        "--input",
        mig.join("image.gprc").to_str().unwrap(),
        "--out",
        img_csv.to_str().unwrap(),
    ]));
    let csv = String::from_utf8(read(&img_csv)).unwrap();
    assert_eq!(csv.lines().count(), 50); // 1 m depth at 0.02 m cells
}

#[test]
fn reconstruct_oracle_writes_clouds_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--demo",
        "--out",
        sim.to_str().unwrap(),
        "--seed",
        "11",
    ]));
    let rec = dir.path().join("rec");
    assert_ok(&gpr_recon(&[
        "reconstruct",
        "--bscans",
        sim.to_str().unwrap(),
        "--out",
        rec.to_str().unwrap(),
        "--oracle-bpa",
        "--gt",
        sim.join("dense.ply").to_str().unwrap(),
        "--seed",
        "11",
    ]));
    assert!(rec.join("sparse.ply").exists());
    let dense = String::from_utf8(read(&rec.join("dense.ply"))).unwrap();
    assert!(dense.contains("element vertex 8064"), "dense cloud size");
    let metrics = String::from_utf8(read(&rec.join("metrics.txt"))).unwrap();
    assert!(metrics.contains("cd_x1e3 "));
    assert!(metrics.contains("l1_x100 "));
}

#[test]
fn train_eval_and_sweep_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--count",
        "3",
        "--out",
        data.to_str().unwrap(),
        "--seed",
        "5",
        "--line-spacing",
        "0.5",
        "--trace-spacing",
        "0.05",
    ]));
    let run = dir.path().join("run");
    assert_ok(&gpr_recon(&[
        "train",
        "--dataset",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--epochs",
        "1",
        "--batch-size",
        "4",
        "--val-size",
        "0",
        "--test-size",
        "0",
        "--width-divisor",
        "16",
        "--input-points",
        "200",
        "--seed",
        "5",
    ]));
    assert!(run.join("checkpoint.gprn").exists());
    let metrics = String::from_utf8(read(&run.join("metrics.csv"))).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("step,train_cd,val_cd,lr"));
    assert_eq!(lines.count(), 1); // 3 samples, batch 4 -> one step

    let eval = dir.path().join("eval");
    let out = gpr_recon(&[
        "eval",
        "--dataset",
        data.to_str().unwrap(),
        "--checkpoint",
        run.join("checkpoint.gprn").to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
        "--width-divisor",
        "16",
        "--input-points",
        "200",
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean cd_x1e3"));
    let report = String::from_utf8(read(&eval.join("report.csv"))).unwrap();
    assert!(report.starts_with("sample,cd_x1e3,l1_x100\n"));
    assert!(report.lines().last().unwrap().starts_with("mean,"));

    let sweep = dir.path().join("sweep");
    assert_ok(&gpr_recon(&[
        "noise-sweep",
        "--dataset",
        data.to_str().unwrap(),
        "--checkpoint",
        run.join("checkpoint.gprn").to_str().unwrap(),
        "--out",
        sweep.to_str().unwrap(),
        "--width-divisor",
        "16",
        "--input-points",
        "200",
        "--levels",
        "0.1,0.2",
    ]));
    let csv = String::from_utf8(read(&sweep.join("sweep.csv"))).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("noise_std,mean_cd_x1e3"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed 9\nline_spacing 1.0\n# comment\n").unwrap();
    let out_dir = dir.path().join("out");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--demo",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    // line_spacing 1.0 over a 2 m slab -> 3 lines, seed from config
    assert!(out_dir.join("bscan_02.gprb").exists());
    assert!(!out_dir.join("bscan_03.gprb").exists());
    let manifest = String::from_utf8(read(&out_dir.join("manifest.txt"))).unwrap();
    assert!(manifest.contains("seed 9"));

    // a flag overrides the same config key
    let out2 = dir.path().join("out2");
    assert_ok(&gpr_recon(&[
        "simulate",
        "--demo",
        "--config",
        cfg.to_str().unwrap(),
        "--line-spacing",
        "0.5",
        "--out",
        out2.to_str().unwrap(),
    ]));
    assert!(out2.join("bscan_04.gprb").exists());
}
