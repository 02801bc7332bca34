use std::path::PathBuf;

use traffic_core::agent::{AgentKind, AgentState};
use traffic_core::network::{EdgeKey, MapFile, NodeId};
use traffic_core::planner::LatencyModel;
use traffic_core::simulation::{init_scenario, summarize, ScenarioConfig, SimError};

fn write_map(name: &str, json: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("traffic-core-{}-{name}.json", std::process::id()));
    std::fs::write(&path, json).unwrap();
    path
}

fn two_node_map() -> PathBuf {
    write_map(
        "pair",
        r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":150,"y":0}],"edges":[{"u":0,"v":1}]}"#,
    )
}

#[test]
fn two_agents_entering_one_edge_update_once_after_both_move() {
    let cfg = ScenarioConfig {
        map: two_node_map().display().to_string(),
        agents: 2,
        spawn_window: 0.0,
        arm: AgentKind::AStarStatic,
        ..ScenarioConfig::default()
    };
    let mut sim = init_scenario(&cfg).unwrap();
    let edge = EdgeKey::new(NodeId(0), NodeId(1));
    assert_eq!(sim.registry().occupancy(edge).unwrap(), 0);
    let report = sim.run_tick().unwrap();
    assert_eq!(report.spawned, 2);
    assert_eq!(report.edge_events, 2);
    assert_eq!(sim.registry().occupancy(edge).unwrap(), 2);
    let cf = sim.registry().congestion_factor(edge).unwrap();
    assert!((cf - (1.0 + 200.0 / 150.0)).abs() < 1e-12);

    let m = sim.run_to_completion().unwrap();
    for j in &m.journeys {
        assert!((j.stats.journey_time().unwrap() - 15.0).abs() <= 0.1);
    }
    assert!((m.max_congestion - cf).abs() < 1e-12);
}

#[test]
fn waiting_agent_resumes_in_the_tick_its_answer_lands() {
    // 20 s latency against 15 s straight roads: concurrent agents must wait.
    let cfg = ScenarioConfig {
        agents: 1,
        spawn_window: 0.0,
        seed: 3,
        latency: LatencyModel::Fixed(20.0),
        timeout: 30.0,
        ..ScenarioConfig::default()
    };
    let mut sim = init_scenario(&cfg).unwrap();
    let mut waited_until = None;
    while !sim.is_finished() {
        let was_waiting = sim.agent(traffic_core::AgentId(0)).map(|a| a.state) == Some(AgentState::Waiting);
        sim.run_tick().unwrap();
        let a = sim.agent(traffic_core::AgentId(0)).unwrap();
        if was_waiting && a.state != AgentState::Waiting {
            waited_until = Some(sim.now());
            break;
        }
    }
    let a = sim.agent(traffic_core::AgentId(0)).unwrap();
    let d = &a.stats.decisions[0];
    let resolved = d.resolved_at.unwrap();
    let t = waited_until.expect("agent waited at some node");
    assert!(resolved > t - 0.1 - 1e-9 && resolved <= t + 1e-9, "released at {t}, answer at {resolved}");
    assert_eq!(a.state, AgentState::Moving);
}

#[test]
fn zero_window_spawns_everyone_at_once() {
    let cfg = ScenarioConfig {
        agents: 10,
        spawn_window: 0.0,
        ..ScenarioConfig::default()
    };
    let mut sim = init_scenario(&cfg).unwrap();
    assert!(sim.schedule().iter().all(|e| e.time == 0.0));
    assert_eq!(sim.run_tick().unwrap().spawned, 10);
}

#[test]
fn same_seed_same_schedule() {
    let cfg = ScenarioConfig {
        agents: 40,
        ..ScenarioConfig::default()
    };
    let a = init_scenario(&cfg).unwrap();
    let b = init_scenario(&cfg).unwrap();
    assert_eq!(a.schedule(), b.schedule());
    assert!(a.schedule().iter().all(|e| (0.0..=10.0).contains(&e.time)));
}

#[test]
fn zero_repetitions_is_invalid() {
    let cfg = ScenarioConfig {
        repetitions: 0,
        ..ScenarioConfig::default()
    };
    assert!(matches!(init_scenario(&cfg), Err(SimError::InvalidConfig(_))));
}

#[test]
fn missing_map_file_is_io() {
    let cfg = ScenarioConfig {
        map: "/nonexistent/map.json".to_string(),
        ..ScenarioConfig::default()
    };
    match init_scenario(&cfg) {
        Err(SimError::Io { path, .. }) => assert_eq!(path, PathBuf::from("/nonexistent/map.json")),
        Err(other) => panic!("unexpected {other}"),
        Ok(_) => panic!("expected an error"),
    }
}

#[test]
fn disconnected_map_is_invalid() {
    let path = write_map(
        "split",
        r#"{"nodes":[{"id":0,"x":0,"y":0},{"id":1,"x":150,"y":0},{"id":2,"x":400,"y":0}],"edges":[{"u":0,"v":1}]}"#,
    );
    let cfg = ScenarioConfig {
        map: path.display().to_string(),
        ..ScenarioConfig::default()
    };
    assert!(matches!(init_scenario(&cfg), Err(SimError::InvalidConfig(_))));
}

#[test]
fn exported_map_runs_like_the_builtin_one() {
    let path = write_map("grid", &MapFile::render(&traffic_core::default_map()));
    let builtin = ScenarioConfig::default();
    let from_file = ScenarioConfig {
        map: path.display().to_string(),
        ..builtin.clone()
    };
    let a = traffic_core::run_scenario(&builtin).unwrap();
    let b = traffic_core::run_scenario(&from_file).unwrap();
    assert_eq!(a.journeys_csv(), b.journeys_csv());
}

#[test]
fn comparison_has_one_row_per_arm() {
    let mut runs = Vec::new();
    for arm in [AgentKind::AStarStatic, AgentKind::ConcurrentPlanner] {
        for k in 0..2 {
            let cfg = ScenarioConfig {
                arm,
                agents: 40,
                ..ScenarioConfig::default()
            }
            .for_run(k);
            runs.push(traffic_core::run_scenario(&cfg).unwrap());
        }
    }
    let s = summarize(&runs);
    let arms: Vec<&str> = s.rows.iter().map(|r| r.arm.as_str()).collect();
    assert_eq!(arms, ["astar", "concurrent"]);
    assert!(s.rows.iter().all(|r| r.runs == 2));
    assert_eq!(s.rows[0].avg_reroute_count.mean, 0.0);
    assert!(s.rows[0].pre_arrival_rate.is_none());
    let single = summarize(&runs[..1]);
    assert_eq!(single.rows[0].avg_journey_time.mean, runs[0].avg_journey_time);
    assert_eq!(single.rows[0].avg_journey_time.std, 0.0);
}

#[test]
fn trace_is_written_only_when_enabled() {
    let off = traffic_core::run_scenario(&ScenarioConfig::default()).unwrap();
    assert_eq!(off.congestion_csv().lines().count(), 1);
    let on = traffic_core::run_scenario(&ScenarioConfig {
        congestion_trace: true,
        ..ScenarioConfig::default()
    })
    .unwrap();
    assert!(on.congestion_csv().lines().count() > 1);
    assert_eq!(off.journeys_csv(), on.journeys_csv());
}
