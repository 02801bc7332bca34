mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_yaml::{Mapping, Value};
use traffic_core::agent::AgentKind;
use traffic_core::network::{node_degree, MapFile};
use traffic_core::planner::llm::{LlmBackend, LlmConfig, ProbeStatus};
use traffic_core::simulation::{run_scenario, summarize, RunMetrics, ScenarioConfig, SimError};
use traffic_core::RoadGraph;

use config::{InvalidConfig, Preset, ReadFailed, Sources};

#[derive(Parser)]
#[command(name = "trafficsim", version, about = "Multi-agent traffic simulator with concurrent route planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario for its configured number of repetitions.
    Run(RunArgs),
    /// Run several arms on paired seeds and tabulate them.
    Compare(CompareArgs),
    /// Inspect, validate or export road maps.
    #[command(subcommand)]
    Map(MapCommand),
    /// Send one planning prompt to the LLM endpoint and report the result.
    ProbeLlm(LlmArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// YAML or JSON scenario document.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config field, e.g. `--set latency.fixed=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum)]
    clock: Option<ClockArg>,
    /// Number of repetitions; run k uses seed + k.
    #[arg(long)]
    reps: Option<u32>,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct LlmArgs {
    #[arg(long, env = "TRAFFICSIM_LLM_URL")]
    llm_url: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Arms to compare.
    #[arg(long, value_delimiter = ',', default_value = "astar,sequential,concurrent")]
    arms: Vec<String>,
    /// Density presets to sweep; each one sets agents and spawn window.
    #[arg(long, value_enum, value_delimiter = ',')]
    densities: Vec<Preset>,
}

#[derive(Subcommand)]
enum MapCommand {
    /// Print nodes and edges.
    Show {
        /// Map file; the built-in grid when omitted.
        map: Option<PathBuf>,
    },
    /// Check a map file and report its shape.
    Validate { map: PathBuf },
    /// Write a map as JSON.
    Export {
        /// Map file to re-export; the built-in grid when omitted.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClockArg {
    Virtual,
    Wall,
}

/// A probe that ran but did not pass (exit code 1).
#[derive(Debug)]
struct ProbeFailed;

impl std::fmt::Display for ProbeFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LLM probe failed")
    }
}

impl std::error::Error for ProbeFailed {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,trafficsim=info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::Map(cmd) => map(cmd),
        Command::ProbeLlm(args) => probe(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InvalidConfig>() {
            return 2;
        }
        if cause.is::<ReadFailed>() || cause.is::<std::io::Error>() || cause.is::<tempfile::PersistError>() {
            return 3;
        }
        if let Some(sim) = cause.downcast_ref::<SimError>() {
            return match sim {
                SimError::InvalidConfig(_) | SimError::Map(_) => 2,
                SimError::Io { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

impl ScenarioArgs {
    fn flags(&self) -> Mapping {
        let mut m = Mapping::new();
        if let Some(seed) = self.seed {
            m.insert("seed".into(), seed.into());
        }
        if let Some(reps) = self.reps {
            m.insert("repetitions".into(), reps.into());
        }
        if let Some(clock) = self.clock {
            let label = match clock {
                ClockArg::Virtual => "virtual",
                ClockArg::Wall => "wall",
            };
            m.insert("clock".into(), label.into());
        }
        let mut llm = Mapping::new();
        if let Some(url) = &self.llm.llm_url {
            llm.insert("url".into(), url.as_str().into());
        }
        if let Some(model) = &self.llm.llm_model {
            llm.insert("model".into(), model.as_str().into());
        }
        if !llm.is_empty() {
            m.insert("llm".into(), Value::Mapping(llm));
        }
        m
    }

    fn load(&self, density: Option<Preset>) -> anyhow::Result<ScenarioConfig> {
        config::load(Sources {
            preset: self.preset,
            file: self.config.as_deref(),
            density,
            overrides: &self.overrides,
            flags: self.flags(),
        })
    }
}

fn run_all(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Vec<RunMetrics>> {
    let mut runs = Vec::new();
    for k in 0..cfg.repetitions {
        let metrics = run_scenario(&cfg.for_run(k))?;
        log::info!("{} {} run {k}: schedule {}", metrics.scenario, metrics.arm, metrics.schedule_hash);
        output::write_run(out, &metrics, k, cfg.congestion_trace)?;
        println!("{}", output::one_line(&metrics, k));
        runs.push(metrics);
    }
    Ok(runs)
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = args.scenario.load(None)?;
    run_all(&cfg, &args.scenario.out)?;
    Ok(())
}

fn parse_arms(labels: &[String]) -> Result<Vec<AgentKind>, InvalidConfig> {
    let mut arms = Vec::new();
    for l in labels {
        let kind = AgentKind::from_label(l.trim())
            .ok_or_else(|| InvalidConfig(format!("unknown arm `{l}` (expected astar, sequential or concurrent)")))?;
        if !arms.contains(&kind) {
            arms.push(kind);
        }
    }
    if arms.is_empty() {
        return Err(InvalidConfig("no arms given".to_string()));
    }
    Ok(arms)
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let arms = parse_arms(&args.arms)?;
    let densities: Vec<Option<Preset>> = if args.densities.is_empty() {
        vec![None]
    } else {
        args.densities.iter().copied().map(Some).collect()
    };
    let base = args.scenario.load(None)?;
    let mut runs = Vec::new();
    for density in densities {
        let mut cfg = args.scenario.load(density)?;
        if let Some(d) = density {
            cfg.name = format!("{}-{}", base.name, d.name());
        }
        let mut hashes: Option<Vec<String>> = None;
        for &arm in &arms {
            let arm_cfg = ScenarioConfig {
                arm,
                mix: Vec::new(),
                ..cfg.clone()
            };
            let arm_runs = run_all(&arm_cfg, &args.scenario.out)?;
            let these: Vec<String> = arm_runs.iter().map(|r| r.schedule_hash.clone()).collect();
            match &hashes {
                None => hashes = Some(these),
                Some(h) if *h != these => bail!("arms of {} saw different spawn schedules", cfg.name),
                Some(_) => {}
            }
            runs.extend(arm_runs);
        }
    }
    let summary = summarize(&runs);
    let table = summary.to_table();
    print!("{table}");
    let dir = args.scenario.out.join(&base.name);
    output::write_atomic(&dir.join("comparison.json"), &summary.to_json())?;
    output::write_atomic(&dir.join("comparison.txt"), &table)?;
    Ok(())
}

fn load_map(path: Option<&Path>) -> anyhow::Result<RoadGraph> {
    let Some(path) = path else {
        return Ok(traffic_core::default_map());
    };
    let text = std::fs::read_to_string(path).map_err(|source| ReadFailed {
        path: path.display().to_string(),
        source,
    })?;
    let graph = MapFile::parse(&text).map_err(|e| InvalidConfig(format!("{}: {e}", path.display())))?;
    if !graph.is_connected() {
        return Err(InvalidConfig(format!("{}: road network is not connected", path.display())).into());
    }
    Ok(graph)
}

fn describe(graph: &RoadGraph, complex_degree: usize) -> String {
    let decision = graph
        .node_ids()
        .filter(|&n| node_degree(graph, n).unwrap_or(0) >= complex_degree)
        .count();
    format!(
        "{} nodes, {} edges, connected, {} nodes of degree >= {}",
        graph.node_count(),
        graph.edge_count(),
        decision,
        complex_degree
    )
}

fn map(cmd: MapCommand) -> anyhow::Result<()> {
    match cmd {
        MapCommand::Show { map } => {
            let g = load_map(map.as_deref())?;
            let mut text = format!("{}\nnodes:\n", describe(&g, ScenarioConfig::default().complex_degree));
            for n in g.nodes() {
                let degree = g.neighbors(n.id).len();
                text.push_str(&format!("  {:>3}  ({:>7.1}, {:>7.1})  degree {degree}\n", n.id, n.position.x, n.position.y));
            }
            text.push_str("edges:\n");
            for e in g.edges() {
                text.push_str(&format!("  {:>3} - {:<3} {:>8.2} m\n", e.u, e.v, e.length));
            }
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
        MapCommand::Validate { map } => {
            let g = load_map(Some(&map))?;
            println!("ok: {}", describe(&g, ScenarioConfig::default().complex_degree));
        }
        MapCommand::Export { map, out } => {
            let g = load_map(map.as_deref())?;
            let json = MapFile::render(&g);
            match out {
                Some(path) => output::write_atomic(&path, &json)?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}

fn probe(args: LlmArgs) -> anyhow::Result<()> {
    let mut cfg = LlmConfig::default();
    if let Some(url) = args.llm_url {
        cfg.url = url;
    }
    if let Some(model) = args.llm_model {
        cfg.model = model;
    }
    println!("probing {} with model {}", cfg.url, cfg.model);
    let backend = LlmBackend::new(cfg, Arc::new(traffic_core::default_map())).context("building HTTP client")?;
    let report = backend.probe();
    let verdict = match &report.status {
        ProbeStatus::Pass(path) => format!("PASS: parsed path {path}"),
        ProbeStatus::Unreachable(e) => format!("FAIL: unreachable: {e}"),
        ProbeStatus::BadResponse(e) => format!("FAIL: bad response: {e}"),
        ProbeStatus::ParseFailed { error, excerpt } => format!("FAIL: {error}; reply began {excerpt:?}"),
    };
    println!("{verdict} ({:.2} s)", report.latency);
    if report.passed() {
        Ok(())
    } else {
        Err(ProbeFailed.into())
    }
}
