use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use traffic_core::simulation::RunMetrics;

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// `<out>/<scenario>/<arm>/run-<k>`
pub fn run_dir(out: &Path, metrics: &RunMetrics, k: u32) -> PathBuf {
    out.join(&metrics.scenario).join(&metrics.arm).join(format!("run-{k}"))
}

pub fn write_run(out: &Path, metrics: &RunMetrics, k: u32, trace: bool) -> anyhow::Result<PathBuf> {
    let dir = run_dir(out, metrics, k);
    write_atomic(&dir.join("journeys.csv"), &metrics.journeys_csv())?;
    write_atomic(&dir.join("summary.json"), &metrics.summary_json())?;
    if trace {
        write_atomic(&dir.join("congestion.csv"), &metrics.congestion_csv())?;
    }
    Ok(dir)
}

pub fn one_line(metrics: &RunMetrics, k: u32) -> String {
    format!(
        "{} {} run {k} seed {}: {}/{} arrived, journey {:.2} s, wait {:.2} s, max CF {:.2}, reroutes {:.2}, pre-arrival {}",
        metrics.scenario,
        metrics.arm,
        metrics.seed,
        metrics.arrived,
        metrics.agents,
        metrics.avg_journey_time,
        metrics.avg_wait_time,
        metrics.max_congestion,
        metrics.avg_reroute_count,
        metrics
            .pre_arrival_rate
            .map(|r| format!("{:.0}%", r * 100.0))
            .unwrap_or_else(|| "-".to_string()),
    )
}
