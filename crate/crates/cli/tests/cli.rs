use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn triality(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triality")).args(args).env_remove("TRIALITY_SEED").output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = triality(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn num(v: &Value, path: &[&str]) -> f64 {
    path.iter().fold(v, |v, k| &v[*k]).as_f64().unwrap_or_else(|| panic!("no number at {path:?} in {v}"))
}

fn amplitudes(v: &Value) -> Vec<f64> {
    v["amplitudes"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|z| z.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()))
        .collect()
}

#[test]
fn prepare_reports_closed_form_triple() {
    let wave = json(&["prepare", "--R", "1", "--theta", "0"]);
    assert_eq!(num(&wave, &["vdc", "V"]), 1.0);

    let center = json(&["prepare", "--target", "center"]);
    for k in ["V", "D", "C"] {
        assert!((num(&center, &["vdc", k]) - 0.5774).abs() < 1e-4);
    }

    let by_params = json(&["prepare", "--R", "0.5176", "--theta", "0.7854"]);
    for (a, b) in amplitudes(&by_params).iter().zip(amplitudes(&center)) {
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn invalid_input_fails_with_message() {
    for args in [
        &["prepare", "--R", "-1", "--theta", "0"][..],
        &["prepare", "--target", "nowhere"],
        &["prepare"],
        &["fringe", "--target", "center", "--steps", "1"],
    ] {
        let out = triality(args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"), "{args:?}");
    }
}

#[test]
fn fringe_visibility() {
    let wave = json(&["fringe", "--target", "state-1", "--exposure", "0"]);
    assert!((num(&wave, &["V"]) - 1.0).abs() < 1e-6);

    let entangled = json(&["fringe", "--target", "state-5", "--seed", "3"]);
    assert!(num(&entangled, &["V"]) <= 0.01, "V = {}", num(&entangled, &["V"]));
}

#[test]
fn fringe_csv_has_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("scan");
    let out = triality(&[
        "fringe",
        "--target",
        "center",
        "--start",
        "0",
        "--stop",
        &(4.0 * std::f64::consts::PI).to_string(),
        "--steps",
        "256",
        "--format",
        "csv",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("xi,counts"));
    assert_eq!(lines.count(), 256);
    let written = std::fs::read_to_string(dir.path().join("scan_fringe.csv")).unwrap();
    assert_eq!(written, stdout);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fitted V"));
}

#[test]
fn block_and_metrics_agree_with_closed_form_when_noiseless() {
    let b = json(&["block", "--R", "2", "--theta", "0.3", "--exposure", "0"]);
    assert!((num(&b, &["D"]) - 0.6).abs() < 1e-12);
    assert!((num(&b["blocked"][0], &["probability"]) - 0.4).abs() < 1e-12);

    let m = json(&["metrics", "--target", "state-7", "--exposure", "0"]);
    for k in ["V", "D", "C"] {
        assert!((num(&m, &["measured", k]) - num(&m, &["closed_form", k])).abs() < 1e-6, "{k}");
    }
    assert!((num(&m, &["duality_gap"]) - num(&m, &["closed_form", "C"]).powi(2)).abs() < 1e-12);
}

#[test]
fn noiseless_table() {
    let t = json(&["table1", "--exposure", "0"]);
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    for row in rows {
        assert!((num(row, &["SUM"]) - 1.0).abs() < 1e-6);
    }
    assert!(num(&rows[4], &["V2_plus_D2"]) < 1e-6);
}

#[test]
fn noisy_table_sum_within_three_sigma_of_one() {
    let t = json(&["table1", "--repeats", "20", "--seed", "11"]);
    for row in t["rows"].as_array().unwrap() {
        let (sum, sigma) = (num(row, &["SUM"]), num(row, &["SUM_std"]));
        assert!((sum - 1.0).abs() <= 3.0 * sigma.max(1e-6), "{}: {sum} ± {sigma}", row["name"]);
    }
}

#[test]
fn sphere_rows() {
    let out = triality(&["sphere", "-n", "1", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "V,D,C,R,theta");
    let center: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    for x in &center[..3] {
        assert!((x - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    let rows = json(&["sphere", "-n", "200"]);
    for r in rows.as_array().unwrap() {
        let (v, d, c) = (num(r, &["V"]), num(r, &["D"]), num(r, &["C"]));
        assert!((v * v + d * d + c * c - 1.0).abs() <= 1e-9);
        // Closed forms from the stored settings.
        let (rr, th) = (num(r, &["R"]), num(r, &["theta"]));
        let n = 1.0 + rr * rr;
        assert!((2.0 * rr * th.cos() / n - v).abs() < 1e-9);
        assert!(((1.0 - rr * rr) / n - d).abs() < 1e-9);
        assert!((2.0 * rr * th.sin() / n - c).abs() < 1e-9);
    }
}

#[test]
fn tomography_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = format!("{}/", dir.path().display());
    let t = json(&["tomo", "--target", "center", "--exposure", "1000000", "--seed", "5", "--out", &prefix]);
    assert!(num(&t, &["fidelity"]) >= 0.999);
    assert!((num(&t, &["C"]) - 0.5774).abs() < 0.01);

    let bars = std::fs::read_to_string(dir.path().join("bars.csv")).unwrap();
    assert_eq!(bars.lines().next(), Some("row,col,re,im"));
    assert_eq!(bars.lines().count(), 17);
    let rho: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rho.json")).unwrap()).unwrap();
    for key in ["rho", "loglik", "iterations", "converged"] {
        assert!(rho.get(key).is_some(), "missing {key}");
    }
    let counts = std::fs::read_to_string(dir.path().join("counts.csv")).unwrap();
    assert_eq!(counts.lines().next(), Some("setting,counts,exposure"));
    assert_eq!(counts.lines().count(), 17);

    let exact = json(&["tomo", "--R", "0.8", "--theta", "1.1", "--exposure", "0"]);
    assert!((num(&exact, &["C"]) - num(&exact, &["C_closed_form"])).abs() < 1e-6);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_deterministic() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let prefix = format!("{}/", dir.path().display());
            let a = triality(&["tomo", "--target", "state-4", "--seed", "9", "--out", &prefix]);
            let b = triality(&["fringe", "--target", "state-6", "--seed", "9", "--out", &prefix]);
            let c = triality(&["table1", "--repeats", "3", "--seed", "9", "--format", "csv"]);
            (a.stdout, b.stdout, c.stdout, read_all(dir.path()))
        })
        .collect();
    assert_eq!(runs[0], runs[1]);

    let other = triality(&["fringe", "--target", "state-6", "--seed", "10"]);
    assert_ne!(other.stdout, runs[0].1);
}

#[test]
fn config_file_and_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    std::fs::write(
        &path,
        r#"{"params": {"R": 1.0, "theta": 0.0}, "phase_grid": {"start": 0.0, "stop": 6.283185307179586, "steps": 32},
            "exposure": 500, "seed": 4}"#,
    )
    .unwrap();
    let cfg = path.to_str().unwrap();

    let from_file = json(&["fringe", "--config", cfg]);
    assert_eq!(from_file["points"].as_array().unwrap().len(), 32);
    assert_eq!(num(&from_file, &["exposure"]), 500.0);
    assert_eq!(num(&from_file, &["seed"]), 4.0);

    let flagged = json(&["fringe", "--config", cfg, "--seed", "8", "--exposure", "0", "--target", "particle"]);
    assert_eq!(num(&flagged, &["seed"]), 8.0);
    assert!(num(&flagged, &["V"]) < 1e-12);

    let env = Command::new(env!("CARGO_BIN_EXE_triality"))
        .args(["fringe", "--config", cfg])
        .env("TRIALITY_SEED", "6")
        .output()
        .unwrap();
    let env: Value = serde_json::from_slice(&env.stdout).unwrap();
    assert_eq!(num(&env, &["seed"]), 6.0);

    std::fs::write(&path, r#"{"params": "center", "phase_grid": {"start": 0, "stop": 1, "steps": 1}}"#).unwrap();
    assert!(!triality(&["fringe", "--config", cfg]).status.success());
}
