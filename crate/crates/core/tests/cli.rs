use std::path::Path;
use std::process::{Command, Output};

fn wavelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavelab")).args(args).output().expect("run wavelab")
}

fn report(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn p(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

#[test]
fn p0_prints_critical_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["p0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("p0 = 4.2280673976"), "{text}");
    let r = report(dir.path(), "p0.json");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["checks"][0]["passed"], true);
    assert_eq!(r["results"]["sign_chains"].as_array().unwrap().len(), 8);
}

#[test]
fn solve_writes_profile_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["solve", "--omega", "0.9", "--out", p(dir.path()), "--dat"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "solve.json");
    assert!(r["results"]["residual"].as_f64().unwrap() <= 1e-10);
    assert_eq!(r["config"]["solver"]["tol"], 1e-10);
    assert!(r["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
    for f in ["wave.csv", "wave.csv.meta.json", "wave.dat"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn regime_violation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["solve", "--a", "0.1", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
}

#[test]
fn malformed_config_names_line_and_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"omega\": 0.9,\n  \"omgea\": 0.8\n}\n").unwrap();
    let out = wavelab(&["solve", "--config", cfg.to_str().unwrap(), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("omgea") && err.contains("line 3"), "{err}");
}

#[test]
fn unreachable_tolerance_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["solve", "--N", "256", "--tol", "1e-30", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn branch_then_dcurve() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["branch", "--omegas", "0.951,0.95,0.949", "--N", "1024", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("branch.csv")).unwrap();
    assert!(csv.starts_with("omega,eps,Iw_min,I2w,G,H,Q,d,dprime_fd,dprime_Q,dsecond_fd,residual\n"));
    assert_eq!(csv.lines().count(), 4);
    let branch = dir.path().join("branch.csv");
    let out = wavelab(&["dcurve", "--branch", branch.to_str().unwrap(), "--out", p(dir.path()), "--dat"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "dcurve.json");
    assert_eq!(r["results"]["convexity"]["numerical_sign"], 1);
    assert!(dir.path().join("dcurve.dat").exists());
}

#[test]
fn evolve_exact_wave_and_blowup() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavelab(&["solve", "--omega", "0.95", "--N", "512", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let wave = dir.path().join("wave.csv");
    let run = dir.path().join("run");
    let out = wavelab(&["evolve", "--init", wave.to_str().unwrap(), "--T", "2", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&run, "evolve.json");
    assert!(r["results"]["sup_orbit_distance"].as_f64().unwrap() <= 1e-6);
    let trace = std::fs::read_to_string(run.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,H,Q,x_norm,orbit_distance\n"));
    assert!(run.join("final.csv.meta.json").exists());

    // above the CFL bound, rejected unless explicitly allowed
    let out = wavelab(&["evolve", "--init", wave.to_str().unwrap(), "--T", "50", "--dt", "0.5", "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("unstable.json");
    std::fs::write(&cfg, "{\"T\": 50, \"dt\": 0.5, \"enforce_cfl\": false}").unwrap();
    let out = wavelab(&["evolve", "--config", cfg.to_str().unwrap(), "--init", wave.to_str().unwrap(), "--out", p(&run)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn stability_with_shatah_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let d = p(dir.path());
    assert_eq!(wavelab(&["branch", "--omegas", "0.954,0.952,0.95,0.948,0.946", "--N", "1024", "--out", d]).status.code(), Some(0));
    let out = wavelab(&["solve", "--omega", "0.95", "--N", "1024", "--out", d]);
    assert_eq!(out.status.code(), Some(0));
    let wave = dir.path().join("wave.csv");
    let branch = dir.path().join("branch.csv");
    let out = wavelab(&[
        "stability", "--wave", wave.to_str().unwrap(), "--perturb", "mode:0.01:4", "--T", "5", "--branch",
        branch.to_str().unwrap(), "--samples", "12", "--out", d, "--dat",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path(), "stability.json");
    assert_eq!(r["results"]["experiment"]["verdict"], "stable-run");
    assert_eq!(r["results"]["shatah"]["satisfied"], 12);
    assert!(dir.path().join("stability.dat").exists());
}

#[test]
fn defaults_are_printable() {
    for cmd in ["solve", "branch", "evolve", "stability"] {
        let out = wavelab(&["defaults", cmd]);
        assert_eq!(out.status.code(), Some(0));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.is_object());
    }
    assert_eq!(wavelab(&["defaults", "nope"]).status.code(), Some(2));
    assert_eq!(wavelab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_wavelab")).env("WAVELAB_THREADS", "zero").args(["defaults", "solve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_wavelab")).env("WAVELAB_THREADS", "2").args(["defaults", "solve"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
