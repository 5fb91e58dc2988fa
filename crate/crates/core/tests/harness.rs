//! Scenario runs end to end: verification, error rows and the size sweep.

use serde_json::json;

use kinlab::harness::{run_replications, run_sweep, verify, Scenario};

fn scenario(v: serde_json::Value) -> Scenario {
    Scenario::from_json(&v.to_string()).unwrap()
}

fn single_factor(founders: u32, generations: u32, estimators: serde_json::Value) -> serde_json::Value {
    json!({
        "name": "single",
        "model": {
            "factor_count": 1, "returns": [1.0], "persistence": [0.6],
            "factor_covariance": [[1.0]], "noise_variance": 0.0
        },
        "sim": {
            "founder_count": founders, "generations": generations, "mean_offspring": 2,
            "offspring_distribution": "fixed", "seed": 4
        },
        "replications": 8,
        "estimators": estimators
    })
}

#[test]
fn fault_injection_makes_verification_fail() {
    let v = single_factor(20_000, 3, json!([{"kind": "ols"}, {"kind": "kin_beta", "g": [1, 2]}]));
    let s = scenario(v.clone());
    let (clean, _) = verify(&s, s.master_seed()).unwrap();
    assert!(clean.passed, "{:?}", clean.rows);
    assert_eq!(clean.failed, 0);

    let mut faulty = v;
    faulty["verify"] = json!({"fault_injection": {"estimator": "ols", "offset": 0.05}});
    let s = scenario(faulty);
    let (bad, _) = verify(&s, s.master_seed()).unwrap();
    assert!(!bad.passed);
    let ols = bad.rows.iter().find(|r| r.estimator == "ols").unwrap();
    assert_eq!(ols.pass, Some(false));
    assert!(bad.rows.iter().filter(|r| r.estimator == "kin_beta").all(|r| r.pass == Some(true)));
}

#[test]
fn grandparent_iv_without_grandparents_is_an_error_row() {
    let s = scenario(single_factor(2_000, 2, json!([{"kind": "ols"}, {"kind": "grandparent_iv"}])));
    let cells = run_replications(&s, s.master_seed()).unwrap();
    // One row per request and replication, errors included.
    assert_eq!(cells.len(), 2 * 8);
    for c in &cells {
        let gp = c.report.estimator.name() == "grandparent_iv";
        assert_eq!(c.is_error(), gp, "{:?}", c.report);
        if gp {
            assert!(c.report.value.is_nan());
        }
    }
    let (v, _) = verify(&s, s.master_seed()).unwrap();
    let gp = v.rows.iter().find(|r| r.estimator == "grandparent_iv").unwrap();
    // A cell that errored counts as a failed check.
    assert_eq!((gp.errors, gp.pass), (8, Some(false)));
    let ols = v.rows.iter().find(|r| r.estimator == "ols").unwrap();
    assert_eq!((ols.errors, ols.pass), (0, Some(true)));
}

#[test]
fn empty_request_list_yields_no_cells() {
    let s = scenario(single_factor(500, 2, json!([])));
    assert!(run_replications(&s, s.master_seed()).unwrap().is_empty());
}

#[test]
fn single_factor_size_sweep_is_flat() {
    let s = scenario(json!({
        "name": "single_sweep",
        "model": {
            "factor_count": 1, "returns": [1.0], "persistence": [0.6],
            "factor_covariance": [[1.0]], "noise_variance": 0.0
        },
        "sim": {
            "founder_count": 40_000, "generations": 6, "mean_offspring": 1.2,
            "offspring_distribution": "poisson", "seed": 5
        },
        "replications": 6,
        "sweep": {}
    }));
    let out = run_sweep(&s, s.master_seed()).unwrap();
    assert!(out.direct_flat);
    // Nested bins share most groups, so a rank trend test picks up the small
    // finite-sample drift of the ratio; judge flatness by size instead.
    let values: Vec<f64> = out.points.iter().filter(|p| p.series == "grouping").map(|p| p.value).collect();
    let spread = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) - values.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread < 0.01, "spread {spread}");
    assert_eq!(out.weights.len(), 1, "zero noise is not diagnosed");
    for p in out.points.iter().filter(|p| p.series == "grouping") {
        assert!((p.value - 0.6).abs() < 4.0 * p.se, "bin {}: {} ± {}", p.bin, p.value, p.se);
    }
}
