use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"))
}

fn blueprintd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blueprintd")).args(args).env_remove("BLUEPRINTD_SEED").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn simulate_writes_exactly_its_three_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = blueprintd(&["simulate", "--scenario", p(&scenario("flat")), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["events.json", "metrics.csv", "summary.json"]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["blueprint_changes"], 0);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn env_seed_overrides_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, env: Option<&str>| {
        let out = dir.path().join(format!("s{seed}-{}", env.unwrap_or("none")));
        let mut c = Command::new(env!("CARGO_BIN_EXE_blueprintd"));
        c.args(["simulate", "--scenario", p(&scenario("flat")), "--seed", seed, "--out", p(&out)]);
        match env {
            Some(v) => c.env("BLUEPRINTD_SEED", v),
            None => c.env_remove("BLUEPRINTD_SEED"),
        };
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    assert_eq!(run("1", Some("9")), run("9", None));
    assert_ne!(run("1", None), run("9", None));
}

#[test]
fn malformed_env_seed_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_blueprintd"))
        .args(["route-eval", "--queries", "50"])
        .env("BLUEPRINTD_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_and_input_errors_exit_two() {
    assert_eq!(blueprintd(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(blueprintd(&["simulate", "--scenario", "/nonexistent.json", "--out", "/tmp/x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(blueprintd(&["plan", "--scenario", p(&bad)]).status.code(), Some(2));
    assert_eq!(blueprintd(&["fit", "--model", "txn", "--data", p(&bad)]).status.code(), Some(2));

    // Too few distinct utilizations to identify the model.
    let flat = dir.path().join("flat.json");
    std::fs::write(&flat, "[[0.5, 0.01], [0.5, 0.011]]").unwrap();
    assert_eq!(blueprintd(&["fit", "--model", "txn", "--data", p(&flat)]).status.code(), Some(2));

    assert_eq!(blueprintd(&["sensitivity", "--scenario", p(&scenario("flat")), "--errors", "0.4..-0.4"]).status.code(), Some(2));
}

#[test]
fn unattainable_slo_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("scale_down")).unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    cfg["slo"]["query_p90_s"] = serde_json::json!(1e-6);
    let path = dir.path().join("impossible.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = blueprintd(&["plan", "--scenario", p(&path)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn plan_reports_the_scale_down_decision() {
    let v = json(&blueprintd(&["plan", "--scenario", p(&scenario("scale_down"))]));
    assert_eq!(v["kept_current"], false);
    assert!(v["w"].as_f64().unwrap().is_finite());
    assert!(v["assignments"].as_object().unwrap().len() == 12);
}

#[test]
fn fit_recovers_provisioning_constants() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.json");
    let obs: Vec<serde_json::Value> = [1, 2, 4, 8, 16]
        .iter()
        .flat_map(|d| {
            [1.0, 10.0].map(|g| serde_json::json!({ "g": g, "dest_vcpus": d, "runtime": (0.7 * 4.0 / *d as f64 + 0.3) * g }))
        })
        .collect();
    std::fs::write(&data, serde_json::to_string(&obs).unwrap()).unwrap();
    let out = dir.path().join("fit.json");
    let o = blueprintd(&["fit", "--model", "provisioning", "--data", p(&data), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((v["c1"].as_f64().unwrap() - 0.7).abs() < 1e-9);
    assert!((v["c2"].as_f64().unwrap() - 0.3).abs() < 1e-9);
    assert_eq!(v["base_vcpus"], 4);
}

#[test]
fn search_compare_and_route_eval_report_orderings() {
    let wl = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/dashboard_12.jsonl");
    let v = json(&blueprintd(&["search-compare", "--workload", p(&wl), "--max-queries", "9"]));
    assert_eq!(v["queries"], 9);
    assert_eq!(v["beam_matches_exhaustive"], true);
    let beam = v["beam_w"].as_f64().unwrap();
    assert!(beam <= v["naive_greedy_w"].as_f64().unwrap_or(f64::INFINITY));
    assert!(beam <= v["random_w"].as_f64().unwrap_or(f64::INFINITY));

    let r = json(&blueprintd(&["route-eval", "--queries", "200", "--seed", "2"]));
    assert!(r["forest_slowdown"].as_f64().unwrap() < r["random_slowdown"].as_f64().unwrap());
    assert!(r["max_nodes_touched"].as_u64().unwrap() <= r["node_bound"].as_u64().unwrap());
}

#[test]
fn sensitivity_grid_has_one_cell_per_combination() {
    let v = json(&blueprintd(&[
        "sensitivity",
        "--scenario",
        p(&scenario("scale_down")),
        "--fractions",
        "0.1,0.4",
        "--errors",
        "-0.4..0.4",
        "--seeds",
        "2",
    ]));
    assert_eq!(v["cells"].as_array().unwrap().len(), 2 * 5 * 2);
}
