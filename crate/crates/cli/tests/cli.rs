use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ionheat(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionheat"))
        .args(args)
        .current_dir(dir)
        .env_remove("IONHEAT_WORKERS")
        .output()
        .expect("spawn ionheat")
}

fn manifest(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "manifest must be one line: {text}");
    serde_json::from_str(lines[0]).expect("manifest is JSON")
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn help_lists_subcommands_and_units() {
    let d = tempfile::tempdir().unwrap();
    let out = ionheat(d.path(), &["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in [
        "heat",
        "traj",
        "wtd",
        "meanwait",
        "cov",
        "diffuse",
        "qfunc",
        "squeeze",
        "matelem",
        "firstjump",
        "regime",
    ] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
    assert!(text.contains("lifetimes") && text.contains("wavelengths"));
    let sub = ionheat(d.path(), &["heat", "--help"]);
    let text = String::from_utf8_lossy(&sub.stdout);
    assert!(text.contains("--t-final") && text.contains("lifetimes"));
    assert!(text.contains("mean_A2"));
}

#[test]
fn usage_errors_exit_two_and_name_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let out = ionheat(d.path(), &["heat", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--no-such-flag"));

    let out = ionheat(d.path(), &["regime", "--eta", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--eta"));

    let out = ionheat(d.path(), &["heat", "--t-final", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--t-final"));

    let out = ionheat(d.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let out = ionheat(d.path(), &["diffuse", "--cov", "missing.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn matelem_table() {
    let d = tempfile::tempdir().unwrap();
    let m = manifest(&ionheat(d.path(), &["matelem", "--eta", "1.5", "--n", "0..3"]));
    assert_eq!(m["command"], "matelem");
    assert_eq!(m["params"]["eta"], 1.5);
    let r = rows(&d.path().join("matelem.csv"));
    assert_eq!(r.len(), 4);
    // <0|cos X|0> = exp(-eta^2 / 2)
    assert!((r[0][1] - (-1.125f64).exp()).abs() < 1e-14);
    // at eta = 1.5 the 0 -> 2 transition is the strongest of n = 0..3
    let best = (0..4).max_by(|&a, &b| r[a][2].total_cmp(&r[b][2])).unwrap();
    assert_eq!(best, 1);
}

#[test]
fn regime_report_values() {
    let d = tempfile::tempdir().unwrap();
    let m = manifest(&ionheat(d.path(), &["regime", "--eta", "0.2", "--out", "regime.json"]));
    assert!((m["summary"]["delta_p_over_hbar_k"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    assert!((m["summary"]["recoil_ratio"].as_f64().unwrap() - 0.04).abs() < 1e-12);
    let file: Value = serde_json::from_str(&std::fs::read_to_string(d.path().join("regime.json")).unwrap()).unwrap();
    assert_eq!(file, m["summary"]);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("cfg.json"), r#"{"eta": 0.5, "rabi": 3.0, "seed": 7}"#).unwrap();
    let m = manifest(&ionheat(d.path(), &["regime", "--config", "cfg.json", "--eta", "0.3"]));
    assert_eq!(m["params"]["eta"], 0.3);
    assert_eq!(m["params"]["rabi"], 3.0);
    assert_eq!(m["seed"], 7);

    std::fs::write(d.path().join("bad.json"), r#"{"eta": 0.5, "colour": 1}"#).unwrap();
    let out = ionheat(d.path(), &["regime", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn meanwait_two_level_limit() {
    let d = tempfile::tempdir().unwrap();
    let m = manifest(&ionheat(d.path(), &["meanwait", "--a-max", "0.1", "--a-step", "0.05"]));
    assert_eq!(m["outputs"][0], "meanwait.csv");
    let r = rows(&d.path().join("meanwait.csv"));
    assert_eq!(r.len(), 3);
    assert_eq!(r[0][0], 0.0);
    assert!((r[0][1] - 2.25).abs() < 1e-6);
    assert!(r[0][3].is_nan());
}

#[test]
fn wtd_is_normalized() {
    let d = tempfile::tempdir().unwrap();
    manifest(&ionheat(
        d.path(),
        &["wtd", "--a", "0", "--zeta", "0", "--tau-max", "40"],
    ));
    let r = rows(&d.path().join("wtd.csv"));
    let s: f64 = r
        .windows(2)
        .map(|w| 0.5 * (w[0][1] + w[1][1]) * (w[1][0] - w[0][0]))
        .sum();
    assert!((s - 1.0).abs() < 1e-4, "{s}");
}

#[test]
fn heat_is_independent_of_worker_count_and_resumable() {
    let d = tempfile::tempdir().unwrap();
    let base = [
        "heat",
        "--eta",
        "0.4",
        "--n-traj",
        "6",
        "--t-final",
        "30",
        "--points",
        "10",
    ];
    let run = |workers: &str, out: &str, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(["--out", out]);
        args.extend(extra);
        let o = Command::new(env!("CARGO_BIN_EXE_ionheat"))
            .args(&args)
            .current_dir(d.path())
            .env("IONHEAT_WORKERS", workers)
            .output()
            .unwrap();
        manifest(&o)
    };
    let m = run("1", "a.csv", &[]);
    assert_eq!(m["workers"], 1);
    assert_eq!(m["summary"]["n_failed"], 0);
    run("3", "b.csv", &["--checkpoint", "ck.bin"]);
    run("2", "c.csv", &["--checkpoint", "ck.bin", "--resume"]);
    let a = std::fs::read(d.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.csv")).unwrap());
    assert_eq!(a, std::fs::read(d.path().join("c.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("# n_traj=6 n_success=6 n_failed=0\nt,eta4_t,mean_A2,stderr,n\n"));
    assert_eq!(&std::fs::read(d.path().join("ck.bin")).unwrap()[..5], b"IONH1");
}

#[test]
fn quantum_traj_dump_feeds_qfunc() {
    let d = tempfile::tempdir().unwrap();
    let m = manifest(&ionheat(
        d.path(),
        &[
            "traj",
            "--model",
            "quantum",
            "--eta",
            "0.3",
            "--n-max",
            "64",
            "--t-final",
            "5",
            "--dump-state",
            "psi.bin",
        ],
    ));
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
    let jumps = std::fs::read_to_string(d.path().join("jumps.jsonl")).unwrap();
    for line in jumps.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["t"].is_number() && v["theta"].is_number());
    }
    let samples = std::fs::read_to_string(d.path().join("samples.csv")).unwrap();
    assert!(samples.starts_with("t,A,p_excited"));

    let q = manifest(&ionheat(
        d.path(),
        &[
            "qfunc",
            "--eta",
            "0.3",
            "--state",
            "psi.bin",
            "--extent",
            "5",
            "--resolution",
            "61",
        ],
    ));
    let norm = q["summary"]["normalization"].as_f64().unwrap();
    assert!((norm - 1.0).abs() < 1e-3, "{norm}");
    let r = rows(&d.path().join("qfunc.csv"));
    assert_eq!(r.len(), 61 * 61);
    assert!(r.iter().all(|x| x[2] >= 0.0));
}

#[test]
fn cov_then_diffuse() {
    let d = tempfile::tempdir().unwrap();
    manifest(&ionheat(
        d.path(),
        &[
            "cov", "--eta", "0.4", "--a-max", "1.5", "--a-step", "0.25", "--jumps", "200",
        ],
    ));
    let r = rows(&d.path().join("covariance.csv"));
    assert_eq!(r.len(), 7);
    assert!(r.iter().all(|x| x[1] >= 0.0 && x[3] >= 0.0 && x[4] > 0.0));
    let m = manifest(&ionheat(
        d.path(),
        &[
            "diffuse",
            "--eta",
            "0.4",
            "--cov",
            "covariance.csv",
            "--n-traj",
            "64",
            "--t-final",
            "50",
            "--points",
            "5",
        ],
    ));
    assert_eq!(m["summary"]["n_traj"], 64);
    let h = rows(&d.path().join("diffusion_curve.csv"));
    assert_eq!(h.len(), 5);
    assert!(h[4][2] > 0.0);
}

#[test]
fn firstjump_small_eta_is_two_level() {
    let d = tempfile::tempdir().unwrap();
    let m = manifest(&ionheat(
        d.path(),
        &["firstjump", "--eta-grid", "0.05", "--n-max", "32"],
    ));
    let mean = m["summary"]["means"][0].as_f64().unwrap();
    assert!((mean - 2.25).abs() < 0.02, "{mean}");
}

#[test]
fn squeeze_bins() {
    let d = tempfile::tempdir().unwrap();
    manifest(&ionheat(
        d.path(),
        &[
            "squeeze",
            "--n-max",
            "96",
            "--n-traj",
            "2",
            "--t-final",
            "5",
            "--bins",
            "0.38,1.0",
            "--sample-every",
            "100",
        ],
    ));
    let text = std::fs::read_to_string(d.path().join("squeeze.csv")).unwrap();
    assert!(text.starts_with("a,amp_var,phase_var,n"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.38,"));
}
