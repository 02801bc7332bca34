use std::path::Path;
use std::process::{Command, Output};

fn trafficsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trafficsim"))
        .args(args)
        .current_dir(dir)
        .env_remove("TRAFFICSIM_LLM_URL")
        .env("RUST_LOG", "off")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn run_writes_the_artifact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = trafficsim(dir.path(), &["run", "--preset", "low", "--reps", "2", "--set", "congestion_trace=true"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 2);
    assert!(stdout.starts_with("low concurrent run 0 seed 42: 10/10 arrived"), "{stdout}");
    for k in 0..2 {
        let run = dir.path().join(format!("out/low/concurrent/run-{k}"));
        let journeys = read(run.join("journeys.csv"));
        assert_eq!(journeys.lines().count(), 11);
        assert!(journeys.starts_with("agent_id,"));
        let summary: serde_json::Value = serde_json::from_str(&read(run.join("summary.json"))).unwrap();
        assert_eq!(summary["seed"], 42 + k);
        assert_eq!(summary["agents"], 10);
        assert!(read(run.join("congestion.csv")).lines().count() > 1);
    }
}

#[test]
fn trace_file_only_when_enabled() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&trafficsim(dir.path(), &["run", "--set", "agents=3"])), 0);
    let run = dir.path().join("out/scenario/concurrent/run-0");
    assert!(run.join("summary.json").exists());
    assert!(!run.join("congestion.csv").exists());
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["run", "--preset", "high", "--seed", "11", "--set", "arm=sequential"];
    assert_eq!(code(&trafficsim(a.path(), &args)), 0);
    assert_eq!(code(&trafficsim(b.path(), &args)), 0);
    for f in ["journeys.csv", "summary.json"] {
        let rel = format!("out/high/sequential/run-0/{f}");
        assert_eq!(read(a.path().join(&rel)), read(b.path().join(&rel)), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(a.path().join("out/high/sequential/run-0/summary.json"))).unwrap();
    assert_eq!(summary["seed"], 11);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.yaml"),
        "name: demo\nagents: 5\narm: astar\nlatency: {fixed: 1.0}\n",
    )
    .unwrap();
    let o = trafficsim(
        dir.path(),
        &["run", "--config", "s.yaml", "--set", "agents=4", "--set", "latency.fixed=2.5", "--out", "res"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("res/demo/astar/run-0/summary.json"))).unwrap();
    assert_eq!(summary["agents"], 4);
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--set", "agents=0"][..],
        &["run", "--set", "no_such_field=1"],
        &["run", "--set", "dt"],
        &["compare", "--arms", "dijkstra"],
    ] {
        let o = trafficsim(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));
    }
    std::fs::write(dir.path().join("bad.yaml"), "agents: [1, 2\n").unwrap();
    assert_eq!(code(&trafficsim(dir.path(), &["run", "--config", "bad.yaml"])), 2);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_files_exit_3_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = trafficsim(dir.path(), &["run", "--config", "absent.yaml"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("absent.yaml"));
    let o = trafficsim(dir.path(), &["run", "--set", "map=absent-map.json"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("absent-map.json"));
}

#[test]
fn compare_pairs_arms_and_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = trafficsim(
        dir.path(),
        &["compare", "--arms", "astar,concurrent", "--reps", "2", "--densities", "low,high", "--set", "name=cmp"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("cmp-high"));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("out/cmp/comparison.json"))).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["runs"] == 2));
    assert_eq!(rows[2]["scenario"], "cmp-high");
    assert!(read(dir.path().join("out/cmp/comparison.txt")).starts_with("scenario"));
    // Paired arms see the same demand.
    let hash = |arm: &str| {
        let s: serde_json::Value =
            serde_json::from_str(&read(dir.path().join(format!("out/cmp-high/{arm}/run-1/summary.json")))).unwrap();
        s["schedule_hash"].clone()
    };
    assert_eq!(hash("astar"), hash("concurrent"));
}

#[test]
fn map_export_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&trafficsim(dir.path(), &["map", "export", "--out", "grid.json"])), 0);
    let o = trafficsim(dir.path(), &["map", "validate", "grid.json"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("ok: 12 nodes, 20 edges"));

    std::fs::write(
        dir.path().join("split.json"),
        r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":150,"y":0},{"id":2,"x":400,"y":0}],"edges":[{"u":0,"v":1}]}"#,
    )
    .unwrap();
    assert_eq!(code(&trafficsim(dir.path(), &["map", "validate", "split.json"])), 2);
    assert_eq!(code(&trafficsim(dir.path(), &["map", "validate", "nothing.json"])), 3);
}

#[test]
fn unreachable_llm_probe_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = trafficsim(dir.path(), &["probe-llm", "--llm-url", "http://127.0.0.1:9/v1"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL: unreachable"));
}
