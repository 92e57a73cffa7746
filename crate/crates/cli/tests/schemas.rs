//! Emitted and bundled JSON documents against the published schema files.

use std::fs;
use std::path::{Path, PathBuf};

use jsonschema::{Draft, JSONSchema};
use serde_json::{json, Value};

use extrudesim_cli::output::write_sweep;
use extrudesim_cli::presets::{self, run_preset, PresetOptions};
use extrudesim_core::sweep::{run_sweep, BaseScenario, SweepDefinition, SweepGrid};

fn schema(name: &str) -> JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(format!("{name}.schema.json"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    JSONSchema::options().with_draft(Draft::Draft7).compile(&doc).unwrap()
}

fn assert_valid(s: &JSONSchema, doc: &Value, what: &str) {
    if let Err(errors) = s.validate(doc) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{what} does not match its schema:\n{}", msgs.join("\n"));
    }
}

fn read(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn find_named(dir: &Path, name: &str) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(find_named(&p, name));
        } else if p.file_name().is_some_and(|f| f == name) {
            out.push(p);
        }
    }
    out
}

#[test]
fn bundled_inputs_match_schemas() {
    let (sc, sw) = (schema("scenario"), schema("sweep"));
    for b in &presets::BUNDLES {
        for (f, text) in b.files {
            let doc: Value = serde_json::from_str(text).unwrap();
            if doc.get("axes").is_some() {
                assert_valid(&sw, &doc, &format!("{}/{f}", b.name));
            } else {
                assert_valid(&sc, &doc, &format!("{}/{f}", b.name));
            }
        }
        // the serialized, defaults-filled form is valid too
        let full = b.scenario(None).unwrap().to_value();
        assert_valid(&sc, &full, &format!("{} (serialized)", b.name));
    }
}

#[test]
fn schema_rejects_what_the_loader_rejects() {
    let sc = schema("scenario");
    let mut doc: Value = serde_json::from_str(presets::find("case1").unwrap().file("scenario.json").unwrap()).unwrap();
    doc["controllers"]["nozzle"]["gain"] = json!(3.0);
    assert!(!sc.is_valid(&doc));
    assert!(extrudesim_core::scenario::Scenario::from_value(doc).is_err());

    let mut doc: Value = serde_json::from_str(presets::find("case1").unwrap().file("scenario.json").unwrap()).unwrap();
    doc["references"]["x1r"] = json!({ "kind": "square-wave", "period": 1.0 });
    assert!(!sc.is_valid(&doc));
    assert!(extrudesim_core::scenario::Scenario::from_value(doc).is_err());
}

#[test]
fn preset_outputs_match_schemas() {
    let (metrics, summary, report) = (schema("metrics"), schema("summary"), schema("report"));
    let tmp = tempfile::tempdir().unwrap();
    for name in ["case2", "case3", "fig5a"] {
        let out = tmp.path().join(name);
        run_preset(name, &out, &PresetOptions::default()).unwrap();
        assert_valid(&report, &read(&out.join("report.json")), &format!("{name}/report.json"));
        for p in find_named(&out, "metrics.json") {
            assert_valid(&metrics, &read(&p), &p.display().to_string());
        }
        for p in find_named(&out, "summary.json") {
            assert_valid(&summary, &read(&p), &p.display().to_string());
        }
    }
}

#[test]
fn summary_with_failed_runs_matches_schema() {
    let bundle = presets::find("case2").unwrap();
    let mut base = bundle.json("scenario.json").unwrap();
    base["horizon_s"] = json!(5.0);
    base["steady_state_window_s"] = json!(1.0);
    let def: SweepDefinition = serde_json::from_value(json!({
        "name": "with-failure",
        "base_scenario": base,
        "axes": [
            { "path": "controllers.strand.opt_gain", "values": [1.0, -20.0] },
            { "path": "controllers.strand.q", "values": [1.0, 10.0] }
        ],
        "surface_metrics": ["ss_err2_pct"]
    }))
    .unwrap();
    assert!(matches!(def.base_scenario, BaseScenario::Inline(_)));
    let grid = SweepGrid::from_definition(def, Path::new(".")).unwrap();
    let res = run_sweep(&grid).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let s = write_sweep(&res, tmp.path(), &grid.surface_metrics, true).unwrap();
    assert_eq!(s.failed_runs.len(), 2);
    assert_valid(&schema("summary"), &read(&tmp.path().join("summary.json")), "summary.json");
    assert!(tmp.path().join("heatmap_ss_err2_pct.svg").exists());
}
