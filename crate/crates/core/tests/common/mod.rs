#![allow(dead_code)]

use serde_json::{json, Value};

use extrudesim_core::scenario::Scenario;

/// Ramp references, an eta1 pulse on [30, 60] s and boundary-layer switching on both loops.
pub fn ramp_scenario() -> Value {
    json!({
        "name": "ramp",
        "plant": { "a1": -1.0, "b1": 1.0, "a2": -0.5, "a21": 0.05, "b2": 4.0 },
        "bounds": {
            "eta1_bar": 1.0, "eta2_bar": 0.1,
            "x1r_bar": 1.0, "x1rd_bar": 0.5,
            "x2r_bar": 1.0, "x2rd_bar": 0.25
        },
        "references": {
            "x1r": { "kind": "ramp-to-hold", "slope": 0.5, "hold_time": 2.0 },
            "x2r": { "kind": "ramp-to-hold", "slope": 0.25, "hold_time": 4.0 }
        },
        "disturbances": {
            "eta1": { "kind": "quadratic-pulse", "amplitude": -0.9, "t_start": 30.0, "t_end": 60.0 }
        },
        "controllers": {
            "nozzle": { "k1": 10.0, "switching": "boundary-layer", "epsilon": 0.4 },
            "strand": { "k22": 0.25, "q": 100.0, "r": 1.0, "switching": "boundary-layer", "epsilon": 0.001 }
        },
        "horizon_s": 90.0,
        "step_s": 1e-3,
        "record_every": 10
    })
}

/// Everything zero: references, disturbances, initial state.
pub fn zero_scenario() -> Value {
    json!({
        "name": "zero",
        "plant": { "a1": -1.0, "b1": 1.0, "a2": -0.5, "a21": 0.2, "b2": 4.0 },
        "bounds": {
            "eta1_bar": 0.0, "eta2_bar": 0.0,
            "x1r_bar": 0.0, "x1rd_bar": 0.0,
            "x2r_bar": 0.0, "x2rd_bar": 0.0
        },
        "references": {
            "x1r": { "kind": "constant", "value": 0.0 },
            "x2r": { "kind": "constant", "value": 0.0 }
        },
        "controllers": {
            "nozzle": { "k1": 5.0, "switching": "signum" },
            "strand": { "k22": 1.0, "q": 1.0, "r": 1.0, "switching": "signum" }
        },
        "horizon_s": 5.0,
        "step_s": 1e-2,
        "steady_state_window_s": 1.0
    })
}

pub fn with(mut doc: Value, edits: &[(&str, Value)]) -> Value {
    for (path, v) in edits {
        extrudesim_core::sweep::set_json_path(&mut doc, path, v.clone()).unwrap();
    }
    doc
}

pub fn scenario(doc: Value) -> Scenario {
    Scenario::from_value(doc).unwrap()
}
