use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinlab::estimators::REPORT_HEADER;
use serde_json::{json, Value};
use tempfile::TempDir;

fn kinlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinlab")).args(args).output().expect("run kinlab")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn base(estimators: Value) -> Value {
    json!({
        "name": "cli",
        "model": {
            "factor_count": 2, "returns": [1.0, 1.0], "persistence": [0.7, 0.3],
            "factor_covariance": [[0.5, 0.0], [0.0, 0.5]], "noise_variance": 0.2
        },
        "sim": {
            "founder_count": 2000, "generations": 3, "mean_offspring": 2,
            "offspring_distribution": "poisson", "seed": 11
        },
        "replications": 3,
        "estimators": estimators
    })
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    kinlab(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_is_deterministic_and_manifest_matches_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "s.json", &base(json!([])));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run("simulate", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("simulate", &cfg, &b, &["--threads", "1"])), 0);

    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let reps = manifest["replications"].as_array().unwrap();
    assert_eq!(reps.len(), 3);
    let mut header = None;
    let mut bodies = Vec::new();
    for e in reps {
        let file = e["file"].as_str().unwrap();
        let text = fs::read_to_string(a.join(file)).unwrap();
        assert_eq!(text, fs::read_to_string(b.join(file)).unwrap(), "{file} differs between runs");
        assert_eq!(e["rows"].as_u64().unwrap() as usize, text.lines().count() - 1);
        let h = text.lines().next().unwrap().to_string();
        assert_eq!(header.get_or_insert_with(|| h.clone()), &h);
        bodies.push(text);
    }
    // Replications share a schema but not their draws.
    assert_ne!(bodies[0], bodies[1]);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());

    // A different master seed changes the files.
    let c = tmp.path().join("c");
    assert_eq!(code(&run("simulate", &cfg, &c, &["--seed", "5"])), 0);
    assert_ne!(fs::read(c.join("population_rep0.csv")).unwrap(), fs::read(a.join("population_rep0.csv")).unwrap());
}

#[test]
fn estimate_reads_simulated_tables() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "s.json", &base(json!([{"kind": "ols"}, {"kind": "grandparent_iv"}])));
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 0);
    assert_eq!(code(&run("estimate", &cfg, &out, &[])), 0);
    let text = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.lines().skip(1).all(|l| !l.contains("error:")));
}

#[test]
fn empty_estimator_list_writes_only_a_header() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "s.json", &base(json!([])));
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 0);
    assert_eq!(code(&run("estimate", &cfg, &out, &[])), 0);
    let text = fs::read_to_string(out.join("estimates.csv")).unwrap();
    assert_eq!(text.trim_end(), REPORT_HEADER.join(","));
}

#[test]
fn grandparent_iv_on_two_generations_is_a_flagged_row() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut v = base(json!([{"kind": "ols"}, {"kind": "grandparent_iv"}]));
    v["sim"]["generations"] = json!(2);
    let cfg = write_config(tmp.path(), "s.json", &v);
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 0);
    let o = run("estimate", &cfg, &out, &[]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(out.join("estimates.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().filter(|l| l.contains("grandparent_iv") && l.contains("error:")).count(), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 flagged"));
}

#[test]
fn verify_passes_then_fails_under_fault_injection() {
    let tmp = TempDir::new().unwrap();
    let mut v = base(json!([{"kind": "ols"}, {"kind": "kin_beta", "g": [1, 2]}]));
    v["sim"]["founder_count"] = json!(10_000);
    v["replications"] = json!(6);
    let cfg = write_config(tmp.path(), "good.json", &v);
    let good = run("verify", &cfg, &tmp.path().join("good"), &[]);
    assert_eq!(code(&good), 0, "{}", String::from_utf8_lossy(&good.stdout));
    assert!(tmp.path().join("good/verification.csv").exists());

    v["verify"] = json!({"fault_injection": {"offset": 0.2}});
    let cfg = write_config(tmp.path(), "bad.json", &v);
    assert_eq!(code(&run("verify", &cfg, &tmp.path().join("bad"), &[])), 3);
}

#[test]
fn configuration_and_io_errors_have_distinct_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");

    let mut v = base(json!([]));
    v["unexpected"] = json!(1);
    let cfg = write_config(tmp.path(), "unknown.json", &v);
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 2);

    let mut v = base(json!([]));
    v["model"]["persistence"] = json!([1.5, 0.3]);
    let cfg = write_config(tmp.path(), "unstable.json", &v);
    assert_eq!(code(&run("simulate", &cfg, &out, &[])), 2);

    let missing = tmp.path().join("missing.json");
    let o = run("simulate", &missing, &out, &[]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    // Estimating before anything was simulated: no manifest to read.
    let cfg = write_config(tmp.path(), "ok.json", &base(json!([{"kind": "ols"}])));
    assert_eq!(code(&run("estimate", &cfg, &tmp.path().join("empty"), &[])), 4);

    let mut v = base(json!([{"kind": "ols"}]));
    v["ingest"] = json!({"paths": [tmp.path().join("nowhere.csv")]});
    let cfg = write_config(tmp.path(), "ingest.json", &v);
    assert_eq!(code(&run("estimate", &cfg, &out, &[])), 4);
}

#[test]
fn sweep_writes_one_row_per_bin_and_series() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut v = base(json!([]));
    v["sim"] = json!({
        "founder_count": 8000, "generations": 5, "mean_offspring": 1.2,
        "offspring_distribution": "poisson", "seed": 12
    });
    v["sweep"] = json!({});
    let cfg = write_config(tmp.path(), "sweep.json", &v);
    let o = run("sweep", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let mut rdr = csv_rows(&out.join("sweep.csv"));
    let header = rdr.remove(0);
    let bin = header.iter().position(|h| h == "bin").unwrap();
    let series = header.iter().position(|h| h == "series").unwrap();
    let mut keys: Vec<(String, String)> = rdr.iter().map(|r| (r[series].clone(), r[bin].clone())).collect();
    let n = keys.len();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), n, "duplicate (bin, series) rows");
    for s in ["grouping", "direct"] {
        assert!(keys.iter().any(|k| k.0 == s), "missing series {s}");
    }
    assert!(keys.iter().any(|k| k.0.starts_with("weight:")));
}

fn csv_rows(p: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(p).unwrap().lines().map(|l| l.split(',').map(String::from).collect()).collect()
}
