//! End-to-end tests of the `extrudesim` binary: files written, exit codes, overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_extrudesim");

fn preset_file(name: &str, file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name).join(file)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("EXTRUDESIM_LOG").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

/// A short copy of the case1 scenario so runs finish quickly.
fn short_scenario(dir: &Path) -> PathBuf {
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(preset_file("case1", "scenario.json")).unwrap()).unwrap();
    doc["horizon_s"] = json!(5.0);
    doc["steady_state_window_s"] = json!(1.0);
    doc["disturbances"]["eta1"] = json!({ "kind": "quadratic-pulse", "amplitude": -0.9, "t_start": 2.0, "t_end": 4.0 });
    let path = dir.join("short.json");
    fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

fn write_sweep(dir: &Path, body: Value) -> PathBuf {
    let path = dir.join("sweep.json");
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn run_writes_two_files_and_two_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let out = tmp.path().join("plain");
    let o = run(&["run", p(&sc), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(listing(&out), ["metrics.json", "trajectory.csv"]);

    let out = tmp.path().join("plotted");
    let o = run(&["run", p(&sc), "--out", p(&out), "--plot"]);
    assert_eq!(code(&o), 0);
    assert_eq!(listing(&out), ["control.svg", "metrics.json", "tracking.svg", "trajectory.csv"]);
    for f in ["control.svg", "tracking.svg"] {
        let svg = fs::read_to_string(out.join(f)).unwrap();
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}

#[test]
fn trajectory_csv_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let out = tmp.path().join("o");
    assert_eq!(code(&run(&["run", p(&sc), "--out", p(&out)])), 0);
    let text = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x1r,x2,x2r,u1,u2,u_cancel,u_sm,u_opt,eta1,eta2,s,W1,W2");
    let rows: Vec<&str> = lines.collect();
    // 5 s at 1 ms, every 10th step
    assert_eq!(rows.len(), 501);
    for field in rows[250].split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
        assert_eq!(digits, 17, "`{field}` is not 17 significant digits");
        assert!(field.parse::<f64>().unwrap().is_finite());
    }
    assert_eq!(rows[500].split(',').next().unwrap().parse::<f64>().unwrap(), 5.0);
}

#[test]
fn missing_file_is_an_io_error_naming_the_path() {
    let o = run(&["run", "/nonexistent/dir/scenario.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("/nonexistent/dir/scenario.json"));
}

#[test]
fn malformed_json_reports_position() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("bad.json");
    fs::write(&f, "{\n  \"name\": \"x\",\n  oops\n}").unwrap();
    let o = run(&["run", p(&f)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn bound_violation_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let out = tmp.path().join("o");
    let o = run(&["run", p(&sc), "--out", p(&out), "--set", "disturbances.eta1.amplitude=-1.5"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("eta1") && err.contains("bound 1"), "{err}");
    assert!(!out.exists(), "nothing is written for a rejected scenario");

    let o = run(&["run", p(&sc), "--out", p(&out), "--force", "--set", "disturbances.eta1.amplitude=-1.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["forced"], json!(true));
    assert_eq!(m["violations"][0]["signal"], json!("eta1"));
}

#[test]
fn divergence_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let o = run(&[
        "run",
        p(&sc),
        "--out",
        p(&tmp.path().join("o")),
        "--set",
        "controllers.strand.enable_sm=false",
        "--set",
        "controllers.strand.opt_gain=-20",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverge"));
}

#[test]
fn set_overrides_reach_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let out = tmp.path().join("o");
    let o = run(&["run", p(&sc), "--out", p(&out), "--set", "controllers.nozzle.k1=17.5"]);
    assert_eq!(code(&o), 0);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["nozzle_certificate"]["configured_gain"], json!(17.5));

    let o = run(&["run", p(&sc), "--set", "controllers.nozzle.nope.k1=1"]);
    assert_eq!(code(&o), 3);
    let o = run(&["run", p(&sc), "--set", "controllers.nozzle.k1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn seed_selects_the_sampled_plant() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let unc = r#"uncertainty={"seed":1,"a1":{"kind":"uniform","fraction":0.2}}"#;
    let plant_a1 = |seed: &str, out: &str| {
        let dir = tmp.path().join(out);
        let o = run(&["run", p(&sc), "--out", p(&dir), "--set", unc, "--seed", seed]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let m: Value = serde_json::from_str(&fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap();
        (m["plant"]["a1"].as_f64().unwrap(), fs::read(dir.join("trajectory.csv")).unwrap())
    };
    let (a, ta) = plant_a1("5", "a");
    let (b, tb) = plant_a1("5", "b");
    let (c, _) = plant_a1("6", "c");
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    assert_ne!(a, c);
    assert!((a + 1.0).abs() <= 0.2 && a != -1.0);
}

fn three_point_sweep(dir: &Path, sc: &Path, extra: Value) -> PathBuf {
    let mut body = json!({
        "name": "three",
        "base_scenario": sc.file_name().unwrap().to_str().unwrap(),
        "axes": [{ "path": "controllers.nozzle.k1", "values": [3.0, 6.0, 12.0] }]
    });
    body.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    write_sweep(dir, body)
}

#[test]
fn sweep_output_independent_of_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let sw = three_point_sweep(tmp.path(), &sc, json!({}));
    let (a, b) = (tmp.path().join("j1"), tmp.path().join("j8"));
    assert_eq!(code(&run(&["sweep", p(&sw), "--jobs", "1", "--out", p(&a)])), 0);
    assert_eq!(code(&run(&["sweep", p(&sw), "--jobs", "8", "--out", p(&b)])), 0);
    let ra = fs::read(a.join("results.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("results.csv")).unwrap());
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 4);
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn cap_exceeded_exits_four_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let sw = three_point_sweep(tmp.path(), &sc, json!({ "max_runs": 2 }));
    let out = tmp.path().join("o");
    let o = run(&["sweep", p(&sw), "--out", p(&out)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn diverging_corner_is_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    short_scenario(tmp.path());
    let sw = write_sweep(
        tmp.path(),
        json!({
            "name": "corner",
            "base_scenario": "short.json",
            "axes": [
                { "path": "controllers.strand.opt_gain", "values": [2.0, -20.0] },
                { "path": "controllers.strand.enable_sm", "values": [0.0] }
            ]
        }),
    );
    // enable_sm is boolean, so a numeric axis value is a validation error
    let o = run(&["sweep", p(&sw), "--out", p(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 3);

    let sw = write_sweep(
        tmp.path(),
        json!({
            "name": "corner",
            "base_scenario": "short.json",
            "axes": [{ "path": "controllers.strand.opt_gain", "values": [2.0, -20.0] }]
        }),
    );
    let out = tmp.path().join("o");
    let o = run(&["sweep", p(&sw), "--out", p(&out), "--set", "controllers.strand.enable_sm=false"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",ok,"));
    assert!(rows[1].contains(",diverged,"));
}

#[test]
fn presets_and_validation() {
    let o = run(&["preset", "case9"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("case1, case2, case3, fig5a, fig5b"));

    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("case2");
    let o = run(&["preset", "case2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], json!(true));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS [5] lq-optimality"));

    assert_eq!(code(&run(&["validate", p(&preset_file("case3", "scenario.json"))])), 0);
    assert_eq!(code(&run(&["validate", p(&preset_file("fig5b", "sweep.json"))])), 0);
    let o = run(&["validate", p(&preset_file("case3", "scenario.json")), "--set", "references.x2r.slope=2"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("x2r |derivative|"), "{}", stderr(&o));
}

#[test]
fn log_level_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = short_scenario(tmp.path());
    let o = Command::new(BIN)
        .args(["run", p(&sc), "--out", p(&tmp.path().join("o")), "--set", "controllers.nozzle.k1=9"])
        .env("EXTRUDESIM_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("override controllers.nozzle.k1 = 9"), "{}", stderr(&o));
    let o = run(&["run", p(&sc), "--out", p(&tmp.path().join("o")), "--set", "controllers.nozzle.k1=9"]);
    assert!(!stderr(&o).contains("override"));
}
