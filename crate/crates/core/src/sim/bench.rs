//! Multi-run benchmarks and parameter sweeps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::controllers::{Controller, RssacController};
use super::episode::{run_episode, EpisodeResult};
use super::scenario::Scenario;
use crate::controller::RssacConfig;
use crate::seeding::{mix, stream_rng};
use crate::{Result, Vec2};

/// Mean, population standard deviation and count of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
            n,
        }
    }
}

/// Aggregates of one controller over a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStats {
    pub controller: String,
    pub min_distance: Stat,
    pub normalized_goal_distance: Stat,
    /// Fraction of collided episodes.
    pub collision: Stat,
    /// Fraction of yielded episodes (episodes where yielding is defined).
    pub yielded: Stat,
    pub cycle_time: Stat,
    pub failures: usize,
}

impl ControllerStats {
    pub fn from_episodes(controller: &str, episodes: &[EpisodeResult]) -> Self {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let min: Vec<f64> = episodes.iter().filter_map(|e| e.min_distance).collect();
        let goal: Vec<f64> = episodes
            .iter()
            .map(|e| e.normalized_goal_distance)
            .collect();
        let col: Vec<f64> = episodes.iter().map(|e| flag(e.collided)).collect();
        let yields: Vec<f64> = episodes
            .iter()
            .filter_map(|e| e.yielded.map(flag))
            .collect();
        let times: Vec<f64> = episodes
            .iter()
            .flat_map(|e| e.cycle_times.iter().copied())
            .collect();
        Self {
            controller: controller.to_string(),
            min_distance: Stat::of(&min),
            normalized_goal_distance: Stat::of(&goal),
            collision: Stat::of(&col),
            yielded: Stat::of(&yields),
            cycle_time: Stat::of(&times),
            failures: episodes.iter().filter(|e| e.failed.is_some()).count(),
        }
    }

    /// `(metric, stat)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, Stat)> {
        vec![
            ("min_distance", self.min_distance),
            ("normalized_goal_distance", self.normalized_goal_distance),
            ("collision_rate", self.collision),
            ("yield_probability", self.yielded),
            ("cycle_time", self.cycle_time),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    pub runs: usize,
    pub master_seed: u64,
    /// Goals are drawn uniformly from a disk of this radius around the
    /// scenario goal; 0 keeps the goal fixed.
    pub goal_radius: f64,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            runs: 100,
            master_seed: 0,
            goal_radius: 1.0,
        }
    }
}

impl BenchmarkOptions {
    pub fn run_seed(&self, run: usize) -> u64 {
        mix(self.master_seed, run as u64)
    }

    pub fn run_goal(&self, scenario: &Scenario, run: usize) -> Vec2 {
        if self.goal_radius <= 0.0 {
            return scenario.goal;
        }
        let mut rng = stream_rng(mix(self.run_seed(run), 0x676f616c), 0);
        let r = self.goal_radius * rng.random::<f64>().sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.random::<f64>();
        scenario.goal + Vec2::new(theta.cos(), theta.sin()) * r
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub stats: Vec<ControllerStats>,
    /// Per-controller episodes, in run order.
    pub episodes: Vec<Vec<EpisodeResult>>,
}

/// Runs every controller on the same `runs` seeds and goals. Episodes run
/// in parallel; results are collected in run order.
pub fn run_benchmark(
    scenario: &Scenario,
    controllers: &[&dyn Controller],
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport> {
    if options.runs == 0 {
        return Err(crate::error::invalid("runs", "need at least one run"));
    }
    let mut stats = Vec::with_capacity(controllers.len());
    let mut episodes = Vec::with_capacity(controllers.len());
    for controller in controllers {
        let eps: Vec<EpisodeResult> = (0..options.runs)
            .into_par_iter()
            .map(|run| {
                let s = scenario.with_goal(options.run_goal(scenario, run));
                run_episode(&s, *controller, options.run_seed(run))
            })
            .collect::<Result<_>>()?;
        stats.push(ControllerStats::from_episodes(controller.name(), &eps));
        episodes.push(eps);
    }
    Ok(BenchmarkReport { stats, episodes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma,
    Alpha,
    Lambda,
}

impl SweepParameter {
    pub fn apply(self, config: &RssacConfig, value: f64) -> RssacConfig {
        let mut c = config.clone();
        match self {
            Self::Sigma => c.sigma = value,
            Self::Alpha => c.cost.alpha = value,
            Self::Lambda => c.cost.lambda = value,
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub stats: ControllerStats,
    pub episodes: Vec<EpisodeResult>,
}

/// One RSSAC benchmark per parameter value, all on the same seeds.
pub fn run_sweep(
    scenario: &Scenario,
    base: &RssacConfig,
    parameter: SweepParameter,
    values: &[f64],
    options: &BenchmarkOptions,
) -> Result<Vec<SweepPoint>> {
    values
        .iter()
        .map(|&value| {
            let controller = RssacController::new(parameter.apply(base, value))?;
            let mut report = run_benchmark(scenario, &[&controller], options)?;
            Ok(SweepPoint {
                value,
                stats: report.stats.remove(0),
                episodes: report.episodes.remove(0),
            })
        })
        .collect()
}
