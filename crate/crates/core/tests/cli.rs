//! The command-line binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::io::Write;

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_poisson-minimax");

fn run(dir: &Path, args: &[&str], stdin: Option<&str>, threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(dir).args(args).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped());
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let mut child = cmd.spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    pipe.write_all(stdin.unwrap_or("").as_bytes()).unwrap();
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
    })
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const GIVEN: &str = r#"{"boundaries": {"alpha_star": 0.297, "beta_star": 2.390}}"#;

#[test]
fn trivial_solve_reports_indifference_odds() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), r#"{"lambda0": 1.0, "lambda1": 1.5, "a": 2.0, "b": 3.0}"#);
    let o = run(d.path(), &["solve", "--config", &cfg], None, None);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["regime"], "Trivial");
    assert!(v["alpha_star"].is_null() && v["beta_star"].is_null());
    assert_eq!(v["lfd"].as_f64(), Some(1.5));
    assert_eq!(v["config_echo"]["command"], "solve");
    assert!(d.path().join("out/solve.json").exists());
}

#[test]
fn malformed_config_exits_two_naming_the_field() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), r#"{"lambda0": 2.0, "lambda1": 1.0}"#);
    let o = run(d.path(), &["solve", "--config", &cfg], None, None);
    assert_eq!(o.status.code(), Some(2));
    let v = json(&o);
    assert_eq!(v["error"]["kind"], "config");
    assert_eq!(v["error"]["field"], "lambda1");

    let cfg = write_config(d.path(), "{\"lambda0\": 1.0,\n \"typo\": 3}");
    let o = run(d.path(), &["solve", "--config", &cfg], None, None);
    assert_eq!(o.status.code(), Some(2));
    assert!(json(&o)["error"]["message"].as_str().unwrap().contains("line 2"));

    let o = run(d.path(), &["h", "--phi0", "5.0", "--config", &write_config(d.path(), GIVEN)], None, None);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(json(&o)["error"]["field"], "phi0");

    let o = run(d.path(), &["solve", "--bogus"], None, None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn detect_streams() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), GIVEN);
    let o = run(d.path(), &["detect", "--config", &cfg, "--stream", "-", "--psi", "1.0"], Some(""), None);
    assert_eq!(o.status.code(), Some(1));
    let v = json(&o);
    assert!(v["error"]["message"].as_str().unwrap().contains("undecided"));
    assert_eq!(v["error"]["detail"]["t"].as_f64(), Some(0.0));

    let o = run(d.path(), &["detect", "--config", &cfg, "--stream", "-", "--psi", "1.0"], Some("0.01\n"), None);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["decision"], "H1");
    assert_eq!(v["stopped_at"].as_f64(), Some(0.01));
    assert_eq!(v["events_consumed"], 1);
    assert!((v["psi"].as_f64().unwrap() - 5.0 * (-0.04f64).exp()).abs() < 1e-14);

    let stream = d.path().join("events.txt");
    fs::write(&stream, "").unwrap();
    let o = run(
        d.path(),
        &["detect", "--config", &cfg, "--stream", stream.to_str().unwrap(), "--psi", "1.0", "--horizon", "1.0"],
        None,
        None,
    );
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["decision"], "H0");
    assert!((v["stopped_at"].as_f64().unwrap() - (1.0f64 / 0.297).ln() / 4.0).abs() < 1e-15);

    let o = run(d.path(), &["detect", "--config", &cfg, "--stream", "-", "--psi", "1.0"], Some("0.5\n0.5\n"), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fode_dump_follows_closed_form() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), GIVEN);
    let o = run(d.path(), &["fode", "--config", &cfg], None, None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(d.path().join("out/fode.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("phi,f0,f1"));
    let mut checked = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        if f[0] >= 0.2 {
            assert!((f[1] - f[0].powf(-0.25)).abs() < 1e-8, "{line}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
    let v = json(&o);
    assert!(v["max_residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn simulate_and_jbar() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), GIVEN);
    let o = run(d.path(), &["simulate", "--config", &cfg, "--phi0", "1.0", "--paths", "500"], None, None);
    assert!(o.status.success());
    let text = fs::read_to_string(d.path().join("out/paths.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("path_id,tau,side,l_exit,int_l_dt,n_jumps"));
    assert_eq!(text.lines().count(), 501);

    let o = run(d.path(), &["jbar", "--config", &cfg, "--phi0", "1.0", "--psi", "0.5", "--paths", "2000"], None, None);
    assert!(o.status.success());
    let v = json(&o);
    assert!(v["jbar"]["value"].as_f64().unwrap() > 0.0);
}

#[test]
fn find_lfd_is_byte_identical_across_thread_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"boundaries": {"alpha_star": 0.297, "beta_star": 2.390}, "n_paths": 20000, "saddle_paths": 5000}"#,
    );
    let a = run(d.path(), &["find-lfd", "--config", &cfg, "--out", "a"], None, Some("1"));
    let b = run(d.path(), &["find-lfd", "--config", &cfg, "--out", "a"], None, Some("3"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["status"], "found");
    let saddle = fs::read_to_string(d.path().join("a/saddle.csv")).unwrap();
    assert_eq!(saddle.lines().next(), Some("psi,jbar,se"));
    assert_eq!(saddle.lines().count(), 51);
}

#[test]
fn nonnegative_gamma_is_flagged_not_failed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"boundaries": {"alpha_star": 0.99, "beta_star": 1.01}, "n_paths": 20000, "saddle_paths": 1000}"#,
    );
    let o = run(d.path(), &["find-lfd", "--config", &cfg], None, None);
    assert!(o.status.success());
    let v = json(&o);
    assert_eq!(v["status"], "existence_not_guaranteed");
    assert!(v["phi0"].is_null());
    assert!(v["gamma_star"]["mc"].as_f64().unwrap() > 0.0);
}

#[test]
fn h_and_gamma_commands() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), GIVEN);
    let o = run(d.path(), &["h", "--config", &cfg, "--phi0", "1.0", "--paths", "100000"], None, None);
    assert!(o.status.success());
    let h = json(&o)["h"].clone();
    let (value, se) = (h["h"].as_f64().unwrap(), h["se"].as_f64().unwrap());
    assert!((value + 0.03).abs() < 0.02 + 3.0 * se, "h(1) = {value} ± {se}");

    let o = run(d.path(), &["gamma", "--config", &cfg, "--paths", "100000"], None, None);
    assert!(o.status.success());
    let v = json(&o);
    assert!(v["difference_in_se"].as_f64().unwrap().abs() < 3.0);
}
