//! Result files: one JSON record per episode, tab-separated statistics.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rssac::sim::{ControllerStats, EpisodeResult};
use rssac::Vec2;
use serde::Serialize;

use crate::config::RunConfig;

const CYCLE_TIME: &str = "cycle_time";

/// Episode outcome without the state log or wall times, so that equal seeds
/// give equal files.
#[derive(Debug, Serialize)]
pub struct EpisodeRecord<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub controller: &'a str,
    pub seed: u64,
    pub goal: Vec2,
    pub min_distance: Option<f64>,
    pub normalized_goal_distance: f64,
    pub collided: bool,
    pub yielded: Option<bool>,
    pub failed: Option<&'a str>,
    pub planning_cycles: usize,
}

impl<'a> EpisodeRecord<'a> {
    pub fn new(e: &'a EpisodeResult, sweep: Option<(&'a str, f64)>) -> Self {
        Self {
            parameter: sweep.map(|s| s.0),
            value: sweep.map(|s| s.1),
            controller: &e.controller,
            seed: e.seed,
            goal: e.goal,
            min_distance: e.min_distance,
            normalized_goal_distance: e.normalized_goal_distance,
            collided: e.collided,
            yielded: e.yielded,
            failed: e.failed.as_deref(),
            planning_cycles: e.cycle_times.len(),
        }
    }
}

/// Creates the output directory and records the effective configuration in
/// it as `config.toml`.
pub fn prepare(config: &RunConfig) -> Result<PathBuf> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml()?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(dir.to_path_buf())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    let file =
        fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

pub fn write_jsonl<'a>(
    path: &Path,
    records: impl IntoIterator<Item = EpisodeRecord<'a>>,
) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        writeln!(w)?;
    }
    Ok(w.flush()?)
}

/// Which metrics a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metrics {
    Outcomes,
    Timing,
}

/// `[parameter, value,] controller, metric, mean, std, n`, tab separated.
pub fn write_table(
    path: &Path,
    parameter: Option<&str>,
    rows: &[(Option<f64>, &ControllerStats)],
    metrics: Metrics,
) -> Result<()> {
    let mut out = String::new();
    if parameter.is_some() {
        out.push_str("parameter\tvalue\t");
    }
    out.push_str("controller\tmetric\tmean\tstd\tn\n");
    for (value, stats) in rows {
        for (metric, stat) in stats.rows() {
            if (metric == CYCLE_TIME) != (metrics == Metrics::Timing) {
                continue;
            }
            if let (Some(p), Some(v)) = (parameter, value) {
                let _ = write!(out, "{p}\t{v}\t");
            }
            let _ = writeln!(
                out,
                "{}\t{metric}\t{}\t{}\t{}",
                stats.controller, stat.mean, stat.std, stat.n
            );
        }
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_state_log(path: &Path, e: &EpisodeResult) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "time,robot_x,robot_y,robot_vx,robot_vy,u_x,u_y,human_id,human_x,human_y"
    )?;
    for entry in &e.log {
        let r = &entry.robot;
        let prefix = format!(
            "{},{},{},{},{},{},{}",
            entry.time,
            r.position.x,
            r.position.y,
            r.velocity.x,
            r.velocity.y,
            entry.control.x,
            entry.control.y
        );
        if entry.humans.is_empty() {
            writeln!(w, "{prefix},,,")?;
        }
        for h in &entry.humans {
            writeln!(w, "{prefix},{},{},{}", h.id, h.position.x, h.position.y)?;
        }
    }
    Ok(w.flush()?)
}

pub fn summary(e: &EpisodeResult) -> String {
    let min = e
        .min_distance
        .map_or("none".to_string(), |d| format!("{d:.3}"));
    let yielded = e.yielded.map_or("n/a".to_string(), |y| y.to_string());
    format!(
        "controller={} seed={} min_distance={min} normalized_goal_distance={:.3} collided={} yielded={yielded}",
        e.controller, e.seed, e.normalized_goal_distance, e.collided
    )
}

pub fn stats_line(s: &ControllerStats) -> String {
    format!(
        "{}: min_distance {:.3}±{:.3} goal {:.3}±{:.3} collisions {:.2} yield {:.2} cycle {:.4}s",
        s.controller,
        s.min_distance.mean,
        s.min_distance.std,
        s.normalized_goal_distance.mean,
        s.normalized_goal_distance.std,
        s.collision.mean,
        s.yielded.mean,
        s.cycle_time.mean
    )
}
