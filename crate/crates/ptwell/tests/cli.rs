use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ptwell(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptwell")).args(args).output().expect("binary runs")
}

fn spec_file(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn rows(out: &Output) -> Vec<Vec<String>> {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# ptwell "));
    lines.next().unwrap();
    lines.map(|l| l.split(',').map(String::from).collect()).collect()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn spectrum_of_empty_well() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "e.spec", "");
    let out = ptwell(&["spectrum", p(&spec), "--kmax", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert!(text.lines().nth(1).unwrap() == "n,kappa,epsilon,residual");
    let r = rows(&out);
    assert_eq!(r.len(), 6);
    assert_eq!(r[0][1], "1.5707963267948966e0");
    for (i, row) in r.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        let k: f64 = row[1].parse().unwrap();
        assert!((k - (i + 1) as f64 * PI / 2.0).abs() < 1e-12);
    }
}

#[test]
fn spectrum_contains_exact_root() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 3\n");
    for backend in ["matrix", "closed"] {
        let r = rows(&ptwell(&["spectrum", p(&spec), "--kmax", "10", "--backend", backend]));
        assert!(r.iter().any(|row| row[1] == "3.1415926535897931e0"), "{backend}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let three = spec_file(dir.path(), "l3.spec", "delta 0.3 1\ndelta 0.6 2\ndelta 0.8 1\n");
    assert_eq!(ptwell(&["spectrum", p(&three), "--backend", "closed"]).status.code(), Some(3));
    assert_eq!(ptwell(&["spectrum", p(&three)]).status.code(), Some(0));

    let corrupt = spec_file(dir.path(), "bad.spec", "delta 0.5\n");
    for cmd in ["spectrum", "classify", "verify", "metric", "wavefunction"] {
        assert_eq!(ptwell(&[cmd, p(&corrupt)]).status.code(), Some(2), "{cmd}");
    }
    let outside = spec_file(dir.path(), "out.spec", "delta 1.5 1\n");
    assert_eq!(ptwell(&["spectrum", p(&outside)]).status.code(), Some(2));
    assert_eq!(ptwell(&["spectrum", "/nonexistent/file.spec"]).status.code(), Some(2));
    assert_eq!(ptwell(&["spectrum", p(&three), "--kmax", "-1"]).status.code(), Some(2));
    assert_eq!(ptwell(&["sweep", p(&three)]).status.code(), Some(2));
    assert_eq!(ptwell(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(ptwell(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_thread_count_is_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "e.spec", "");
    let out = Command::new(env!("CARGO_BIN_EXE_ptwell"))
        .args(["spectrum", p(&spec)])
        .env("PTWELL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 1\n");
    let target = dir.path().join("spectrum.csv");
    let out = ptwell(&["spectrum", p(&spec), "--kmax", "5", "--out", p(&target)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    assert!(text.starts_with("# ptwell 0.1.0 spectrum"));
    assert_eq!(text.lines().count(), 2 + 3);
}

#[test]
fn sweep_shows_conjugate_pair_past_coalescence() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 1\n");
    let out = ptwell(&["sweep", p(&spec), "--xi-to", "6", "--steps", "61", "--levels", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let r = rows(&out);
    assert_eq!(r.len(), 3 * 61);
    let level = |n: &str| r.iter().filter(|row| row[0] == n).cloned().collect::<Vec<_>>();
    let (l1, l2, l3) = (level("1"), level("2"), level("3"));
    assert!(l2.iter().all(|row| row[2] == "3.1415926535897931e0" && row[4] == "real"));
    let merged: Vec<_> = l1.iter().filter(|row| row[4] == "merged").collect();
    assert_eq!(merged.len(), 1);
    let xi_c: f64 = merged[0][1].parse().unwrap();
    assert!((xi_c - 5.059764942477803).abs() < 1e-8);
    let (a, b) = (l1.last().unwrap(), l3.last().unwrap());
    assert_eq!((a[4].as_str(), b[4].as_str()), ("complex", "complex"));
    let (ia, ib): (f64, f64) = (a[3].parse().unwrap(), b[3].parse().unwrap());
    assert!(ia > 0.0 && (ia + ib).abs() < 1e-9);
    assert_eq!(a[2], b[2]);
}

#[test]
fn sweep_small_coupling_follows_quadratic_law() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 1\n");
    let r = rows(&ptwell(&["sweep", p(&spec), "--xi-to", "0.05", "--steps", "6", "--levels", "1"]));
    for row in &r[1..] {
        let xi: f64 = row[1].parse().unwrap();
        let k: f64 = row[2].parse().unwrap();
        let ratio = (k - PI / 2.0) / (xi * xi / (PI * PI));
        assert!((ratio - 1.0).abs() < 1e-2, "{ratio}");
    }
}

#[test]
fn classify_patterns() {
    let dir = tempfile::tempdir().unwrap();
    for (a, expected) in [("0.5", "FRFRFR"), ("0.33333333333333333", "FFRFFR")] {
        let spec = spec_file(dir.path(), "c.spec", &format!("delta {a} 1\n"));
        let r = rows(&ptwell(&["classify", p(&spec), "--levels", "6", "--xi-max", "40"]));
        let tags: String = r.iter().map(|row| row[1].clone()).collect();
        assert_eq!(tags, expected);
        for row in &r {
            assert_eq!(row[2].is_empty(), row[1] == "R");
        }
    }
}

#[test]
fn metric_at_zero_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "z.spec", "delta 0.5 0\n");
    let out = ptwell(&["metric", p(&spec), "--trunc", "6", "--grid", "512"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["truncation"], 6);
    assert!(v["min_eigenvalue_of_product_gram"].as_f64().unwrap() > 0.0);
    assert!(v["quasi_hermiticity_residual_max"].as_f64().unwrap() < 1e-10);
    let mu = v["mu"].as_array().unwrap();
    assert_eq!(mu.len(), 12);
    assert!((mu[0].as_f64().unwrap() - PI).abs() < 1e-9);
    assert!((mu[1].as_f64().unwrap() + PI).abs() < 1e-9);
    assert_eq!(v["identity_defects"].as_array().unwrap().len(), 2);
    assert!(v["provenance"].as_str().unwrap().starts_with("# ptwell 0.1.0 metric"));
}

#[test]
fn metric_weight_schemes_differ() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 1\n");
    let get = |omega: &str| json(&ptwell(&["metric", p(&spec), "--trunc", "8", "--omega", omega]));
    let (unit, inv) = (get("unit"), get("inv-mu2"));
    for v in [&unit, &inv] {
        assert!(v["min_eigenvalue_of_product_gram"].as_f64().unwrap() > 0.0);
        assert!(v["quasi_hermiticity_residual_max"].as_f64().unwrap() < 1e-8);
    }
    assert_ne!(unit["min_eigenvalue_of_product_gram"], inv["min_eigenvalue_of_product_gram"]);
}

#[test]
fn verify_reports_checks() {
    let dir = tempfile::tempdir().unwrap();
    let one = spec_file(dir.path(), "one.spec", "delta 0.4 2\n");
    let out = ptwell(&["verify", p(&one)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 20240501);

    let two = spec_file(dir.path(), "two.spec", "delta 0.3 1.5\ndelta 0.7 0\n");
    let v = json(&ptwell(&["verify", p(&two), "--seed", "3"]));
    let checks = v["checks"].as_array().unwrap();
    let deg = checks.iter().find(|c| c["name"] == "degeneration").unwrap();
    assert_eq!(deg["status"], "pass");
}

#[test]
fn wavefunction_rows() {
    let dir = tempfile::tempdir().unwrap();
    let free = spec_file(dir.path(), "z.spec", "");
    let r = rows(&ptwell(&["wavefunction", p(&free), "--level", "1", "--samples", "11"]));
    assert_eq!(r.len(), 11);
    assert!(r.iter().all(|row| row[2] == "0.0000000000000000e0"));
    assert_eq!(r[5][0], "0.0000000000000000e0");
    assert_eq!(r[5][1], "1.0000000000000000e0");

    let spec = spec_file(dir.path(), "h.spec", "delta 0.3 2\n");
    for level in ["1", "2", "3"] {
        let r = rows(&ptwell(&["wavefunction", p(&spec), "--level", level, "--samples", "21"]));
        for row in [&r[0], &r[20]] {
            assert_eq!(row[1], "0.0000000000000000e0");
            assert_eq!(row[2], "0.0000000000000000e0");
        }
        for i in 0..21 {
            let (a, b) = (&r[i], &r[20 - i]);
            let x: f64 = a[0].parse().unwrap();
            let y: f64 = b[0].parse().unwrap();
            assert_eq!(x, -y);
            let (ar, ai): (f64, f64) = (a[1].parse().unwrap(), a[2].parse().unwrap());
            let (br, bi): (f64, f64) = (b[1].parse().unwrap(), b[2].parse().unwrap());
            assert!((ar - br).abs() < 1e-12 && (ai + bi).abs() < 1e-12, "level {level} at x = {x}");
        }
    }
}

#[test]
fn wavefunction_of_complex_level_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.5 6\n");
    assert_eq!(ptwell(&["wavefunction", p(&spec), "--level", "1"]).status.code(), Some(2));
    assert_eq!(ptwell(&["wavefunction", p(&spec), "--level", "2"]).status.code(), Some(0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = spec_file(dir.path(), "h.spec", "delta 0.25 1.5\ndelta 0.6 1\n");
    let s = p(&spec);
    for args in [
        vec!["spectrum", s, "--kmax", "30"],
        vec!["sweep", s, "--xi-to", "10", "--steps", "41"],
        vec!["classify", s, "--levels", "4", "--xi-max", "20"],
        vec!["metric", s, "--trunc", "6", "--grid", "256"],
        vec!["verify", s, "--seed", "11"],
    ] {
        let a = ptwell(&args);
        let b = ptwell(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert_eq!(a.status.code(), b.status.code());
    }
}
