use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn flockctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flockctl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn two_body(dir: &Path, dt: &str, lambda: &str) -> PathBuf {
    fs::write(dir.join("two.csv"), "x_1,v_1\n0,1\n1,-1\n").unwrap();
    write_config(
        dir,
        &format!("two-{dt}-{lambda}.json"),
        &format!(
            r#"{{"mode": "particle", "lambda": "{lambda}", "kernel": {{"amplitude": "1", "beta": "0"}},
                "dt": "{dt}", "t_end": "5", "record_stride": 10,
                "initial": {{"csv": "two.csv"}}, "output_dir": "out"}}"#
        ),
    )
}

fn kinetic(dir: &Path, name: &str, beta: &str) -> PathBuf {
    write_config(
        dir,
        name,
        &format!(
            r#"{{"mode": "kinetic", "lambda": 1, "kernel": {{"amplitude": 1, "beta": "{beta}"}},
                "dt": "0.05", "t_end": "3", "record_stride": 4,
                "initial": {{"density": {{"kind": "product", "box_lower": [-1], "box_upper": [1],
                    "velocity": {{"kind": "ball", "center": [0], "radius": 1}}, "mass": 1}},
                    "samples": 60, "seed": 1}},
                "output_dir": "out"}}"#
        ),
    )
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("verification.json")).unwrap()).unwrap()
}

fn status_of<'a>(report: &'a Value, name: &str) -> &'a str {
    report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no check {name}"))["status"]
        .as_str()
        .unwrap()
}

#[test]
fn minimal_particle_run_writes_four_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = two_body(tmp.path(), "1e-3", "1");
    let out = tmp.path().join("run");
    let o = flockctl(&["verify", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["diagnostics.csv", "envelope.json", "final_state.csv", "verification.json"]);
    let r = report(&out);
    assert_eq!(status_of(&r, "two-body-closed-form"), "pass");
    for c in r["checks"].as_array().unwrap() {
        let keys: Vec<&String> = c.as_object().unwrap().keys().collect();
        for k in ["bound", "measured", "name", "regime", "status", "tolerance"] {
            assert!(keys.iter().any(|x| x.as_str() == k), "missing {k}");
        }
    }
    let header = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(header.starts_with("t,m0,m1_1,m2,X,EV,phi,Phi\n"));
}

#[test]
fn missing_beta_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"mode": "particle", "lambda": 1, "kernel": {"amplitude": 1}, "dt": 0.1, "t_end": 1,
            "initial": {"csv": "x.csv"}, "output_dir": "out"}"#,
    );
    let o = flockctl(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kernel.beta"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn coarse_steps_fail_a_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = two_body(tmp.path(), "0.5", "1");
    let o = flockctl(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(status_of(&report(&tmp.path().join("out")), "two-body-closed-form"), "fail");
}

#[test]
fn blow_up_is_a_numeric_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = two_body(tmp.path(), "1", "1e6");
    let text = fs::read_to_string(&cfg).unwrap().replace(r#""t_end": "5""#, r#""t_end": "100""#);
    fs::write(&cfg, text).unwrap();
    let o = flockctl(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("overflow"));
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = kinetic(tmp.path(), "k.json", "0.2");
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = flockctl(&["verify", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.code() == Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        let files: Vec<Vec<u8>> = ["diagnostics.csv", "final_state.csv", "envelope.json", "verification.json"]
            .iter()
            .map(|f| fs::read(out.join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn seed_flag_changes_the_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = kinetic(tmp.path(), "k.json", "0.2");
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        flockctl(&["simulate", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap(), "--seed", seed]);
        fs::read(out.join("final_state.csv")).unwrap()
    };
    assert_ne!(run("1", "a"), run("2", "b"));
}

#[test]
fn quarter_regime_routes_to_the_algebraic_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = kinetic(tmp.path(), "q.json", "0.25");
    let o = flockctl(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(&tmp.path().join("out"));
    assert_eq!(status_of(&r, "lambda-algebraic"), "pass");
    assert!(status_of(&r, "lambda-stretched-exponential").starts_with("skipped"));
}

#[test]
fn uncovered_regimes_are_skipped_with_reasons() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("still.csv"), "x_1,v_1\n0,1\n1,1\n").unwrap();
    let still = write_config(
        tmp.path(),
        "still.json",
        r#"{"mode": "particle", "lambda": 1, "kernel": {"amplitude": 1, "beta": 0.3}, "dt": 0.01, "t_end": 1,
            "initial": {"csv": "still.csv"}, "output_dir": "still"}"#,
    );
    assert_eq!(flockctl(&["verify", "--config", still.to_str().unwrap()]).status.code(), Some(0));
    let r = report(&tmp.path().join("still"));
    assert_eq!(status_of(&r, "flocking-exponential-rate"), "skipped: hypothesis EV0 > 0 violated");

    fs::write(tmp.path().join("two.csv"), "x_1,v_1\n0,1\n1,-1\n").unwrap();
    let steep = write_config(
        tmp.path(),
        "steep.json",
        r#"{"mode": "particle", "lambda": 1, "kernel": {"amplitude": 1, "beta": 0.8}, "dt": 0.01, "t_end": 1,
            "initial": {"csv": "two.csv"}, "output_dir": "steep"}"#,
    );
    assert_eq!(flockctl(&["verify", "--config", steep.to_str().unwrap()]).status.code(), Some(0));
    let r = report(&tmp.path().join("steep"));
    assert_eq!(status_of(&r, "flocking-exponential-rate"), "skipped: β > 1/2 unconditional regime not covered");
    assert_eq!(status_of(&r, "velocity-fluctuation-gronwall"), "pass");
}

#[test]
fn envelope_subcommand_prints_constants() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = two_body(tmp.path(), "1e-3", "1");
    let o = flockctl(&["envelope", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["X0"], 0.5);
    assert_eq!(v["EV0"], 2.0);
    assert_eq!(v["params"]["kappa1"], 1.0);
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn selected_checks_only() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("two.csv"), "x_1,v_1\n0,1\n1,-1\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "sel.json",
        r#"{"mode": "particle", "lambda": 1, "kernel": {"amplitude": 1, "beta": 0}, "dt": 0.01, "t_end": 1,
            "initial": {"csv": "two.csv"}, "checks": ["energy-monotone", "momentum-conservation"], "output_dir": "out"}"#,
    );
    assert_eq!(flockctl(&["verify", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let r = report(&tmp.path().join("out"));
    let names: Vec<&str> = r["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["energy-monotone", "momentum-conservation"]);
}
