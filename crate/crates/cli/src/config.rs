//! Scenario loading: preset, then config file, then a density sweep step,
//! then `--set` overrides, then dedicated flags. Everything is merged as a YAML value tree and
//! deserialized once, so unknown keys and bad types surface together.

use std::path::Path;

use serde_yaml::{Mapping, Value};
use traffic_core::simulation::ScenarioConfig;

/// Problem with the user's configuration (exit code 2).
#[derive(Debug)]
pub struct InvalidConfig(pub String);

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid config: {}", self.0)
    }
}

impl std::error::Error for InvalidConfig {}

/// A file the user pointed at could not be read (exit code 3).
#[derive(Debug)]
pub struct ReadFailed {
    pub path: String,
    pub source: std::io::Error,
}

impl std::fmt::Display for ReadFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot read {}", self.path)
    }
}

impl std::error::Error for ReadFailed {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 10 agents.
    Low,
    /// 40 agents spawned within 10 s.
    High,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Low => "low",
            Preset::High => "high",
        }
    }

    fn values(&self) -> Mapping {
        let mut m = self.density();
        m.insert("name".into(), self.name().into());
        m
    }

    fn density(&self) -> Mapping {
        let agents = match self {
            Preset::Low => 10,
            Preset::High => 40,
        };
        let mut m = Mapping::new();
        m.insert("agents".into(), agents.into());
        m.insert("spawn_window".into(), 10.0.into());
        m
    }
}

pub fn parse_document(text: &str, origin: &str) -> Result<Mapping, InvalidConfig> {
    match serde_yaml::from_str::<Value>(text).map_err(|e| InvalidConfig(format!("{origin}: {e}")))? {
        Value::Null => Ok(Mapping::new()),
        Value::Mapping(m) => Ok(m),
        _ => Err(InvalidConfig(format!("{origin}: top level must be a mapping"))),
    }
}

pub fn read_document(path: &Path) -> anyhow::Result<Mapping> {
    let text = std::fs::read_to_string(path).map_err(|source| ReadFailed {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_document(&text, &path.display().to_string())?)
}

/// Recursively overlays `top` on `base`; nested mappings merge, anything
/// else replaces.
pub fn merge(base: &mut Mapping, top: Mapping) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Mapping(b)), Value::Mapping(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `key=value`; dotted keys address nested fields and the value is
/// read as a YAML scalar or flow collection.
pub fn apply_override(doc: &mut Mapping, assignment: &str) -> Result<(), InvalidConfig> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| InvalidConfig(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(InvalidConfig(format!("override `{assignment}` has an empty key")));
    }
    let value: Value = serde_yaml::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut nested = value;
    for part in key.rsplit('.') {
        let mut m = Mapping::new();
        m.insert(part.into(), nested);
        nested = Value::Mapping(m);
    }
    let Value::Mapping(top) = nested else { unreachable!() };
    merge(doc, top);
    Ok(())
}

pub fn into_config(doc: Mapping) -> Result<ScenarioConfig, InvalidConfig> {
    // serde_yaml wants `!fixed 3.2` for enums; going through JSON accepts
    // the `{fixed: 3.2}` map form in both YAML and JSON documents.
    let json = serde_json::to_value(Value::Mapping(doc)).map_err(|e| InvalidConfig(e.to_string()))?;
    let cfg: ScenarioConfig = serde_json::from_value(json).map_err(|e| InvalidConfig(e.to_string()))?;
    cfg.validate().map_err(|e| InvalidConfig(e.to_string().trim_start_matches("invalid config: ").to_string()))?;
    Ok(cfg)
}

pub struct Sources<'a> {
    pub preset: Option<Preset>,
    pub file: Option<&'a Path>,
    /// Agent count and spawn window only; applied over the file.
    pub density: Option<Preset>,
    pub overrides: &'a [String],
    pub flags: Mapping,
}

pub fn load(sources: Sources<'_>) -> anyhow::Result<ScenarioConfig> {
    let mut doc = Mapping::new();
    if let Some(p) = sources.preset {
        merge(&mut doc, p.values());
    }
    if let Some(path) = sources.file {
        merge(&mut doc, read_document(path)?);
    }
    if let Some(d) = sources.density {
        merge(&mut doc, d.density());
    }
    for o in sources.overrides {
        apply_override(&mut doc, o)?;
    }
    merge(&mut doc, sources.flags);
    Ok(into_config(doc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use traffic_core::agent::AgentKind;
    use traffic_core::planner::LatencyModel;

    fn cfg(text: &str, sets: &[&str]) -> Result<ScenarioConfig, InvalidConfig> {
        let mut doc = parse_document(text, "test")?;
        for s in sets {
            apply_override(&mut doc, s)?;
        }
        into_config(doc)
    }

    #[test]
    fn minimal_document() {
        let c = cfg("{agents: 10}", &[]).unwrap();
        assert_eq!(c.agents, 10);
        assert_eq!(c.dt, 0.1);
        assert_eq!(cfg("", &[]).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn json_is_accepted() {
        let c = cfg(r#"{"agents": 40, "arm": "astar", "latency": {"uniform": {"lo": 1.0, "hi": 2.0}}}"#, &[]).unwrap();
        assert_eq!(c.arm, AgentKind::AStarStatic);
        assert_eq!(c.latency, LatencyModel::Uniform { lo: 1.0, hi: 2.0 });
    }

    #[test]
    fn dotted_overrides() {
        let c = cfg("latency: {fixed: 3.2}", &["seed=7", "latency.fixed=20", "llm.model=other", "name=x"]).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.latency, LatencyModel::Fixed(20.0));
        assert_eq!(c.llm.model, "other");
        assert_eq!(c.name, "x");
    }

    #[test]
    fn bad_input_is_invalid_config() {
        assert!(cfg("agentz: 3", &[]).is_err());
        assert!(cfg("agents: many", &[]).is_err());
        assert!(cfg("agents: 0", &[]).is_err());
        assert!(cfg("- 1", &[]).is_err());
        assert!(cfg("", &["seed"]).is_err());
        assert!(cfg("", &["=3"]).is_err());
    }

    #[test]
    fn preset_then_file() {
        let mut doc = Mapping::new();
        merge(&mut doc, Preset::High.values());
        merge(&mut doc, parse_document("{seed: 9}", "t").unwrap());
        let c = into_config(doc).unwrap();
        assert_eq!((c.agents, c.seed, c.name.as_str()), (40, 9, "high"));
    }
}
