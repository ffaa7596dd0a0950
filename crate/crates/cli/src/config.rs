//! TOML run configuration. Every field has a default, so an empty file
//! runs the intersection scenario with the standard controller settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rssac::controller::RssacConfig;
use rssac::cost::CostParams;
use rssac::datasets::parse_trajectory_file;
use rssac::dynamics::TimeGrid;
use rssac::predictor::PredictorConfig;
use rssac::sim::{
    dataset_replay_scenario, intersection_scenario, static_field_scenario, Controller,
    ExhaustiveTreeSearch, IntersectionParams, RssacController, Scenario, ScenarioKind,
    ZeroController,
};
use rssac::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ControllerKind {
    Rssac,
    NominalOnly,
    Exhaustive,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub runs: usize,
    pub controllers: Vec<ControllerKind>,
    pub rssac: ControllerSection,
    pub grid: TimeGrid,
    pub cost: CostSection,
    pub scenario: ScenarioSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: 100,
            controllers: vec![ControllerKind::Rssac],
            rssac: ControllerSection::default(),
            grid: TimeGrid::default(),
            cost: CostSection::default(),
            scenario: ScenarioSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub sigma: f64,
    pub samples: usize,
    pub t_calc: f64,
    pub dt_r: f64,
    pub u_max: f64,
    pub epsilons: Vec<f64>,
    pub nominal_magnitudes: Vec<f64>,
    pub nominal_headings: usize,
}

impl Default for ControllerSection {
    fn default() -> Self {
        let d = RssacConfig::default();
        Self {
            sigma: d.sigma,
            samples: d.samples,
            t_calc: d.t_calc,
            dt_r: d.dt_r,
            u_max: d.u_max,
            epsilons: d.epsilons,
            nominal_magnitudes: d.nominal_magnitudes,
            nominal_headings: d.nominal_headings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    /// Row-major 4×4 state weight.
    pub q: [[f64; 4]; 4],
    pub r: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl Default for CostSection {
    fn default() -> Self {
        let d = CostParams::default();
        let mut q = [[0.0; 4]; 4];
        for (i, row) in q.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = d.q[(i, j)];
            }
        }
        Self {
            q,
            r: d.r,
            alpha: d.alpha,
            lambda: d.lambda,
            beta: d.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    /// Radius of the disk benchmark goals are drawn from; `None` uses 0 for
    /// the intersection and 1 m otherwise.
    pub goal_radius: Option<f64>,
    pub intersection: IntersectionParams,
    pub static_field: StaticFieldSection,
    pub dataset: DatasetSection,
    /// Overrides the scenario's own predictor when set.
    pub predictor: Option<PredictorConfig>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Intersection,
            goal_radius: None,
            intersection: IntersectionParams::default(),
            static_field: StaticFieldSection::default(),
            dataset: DatasetSection::default(),
            predictor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticFieldSection {
    pub humans: usize,
}

impl Default for StaticFieldSection {
    fn default() -> Self {
        Self { humans: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Trajectory file; relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    pub start_frame: i64,
    pub robot_start: Vec2,
    pub goal: Vec2,
    pub duration: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            start_frame: 0,
            robot_start: Vec2::new(0.0, -5.0),
            goal: Vec2::new(0.0, 5.0),
            duration: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write the per-step state log of `run`.
    pub state_log: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("rssac-out"),
            state_log: false,
        }
    }
}

impl RunConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut config: Self = toml::from_str(&text)
            .with_context(|| format!("invalid config file {}", path.display()))?;
        if let Some(data) = &config.scenario.dataset.path {
            if data.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.scenario.dataset.path = Some(base.join(data));
            }
        }
        config
            .validate()
            .with_context(|| format!("invalid config file {}", path.display()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.rssac_config()?.validate()?;
        if self.runs == 0 {
            bail!("invalid parameter `runs`: need at least one run");
        }
        if self.controllers.is_empty() {
            bail!("invalid parameter `controllers`: list at least one controller");
        }
        if let Some(r) = self.scenario.goal_radius {
            if !(r.is_finite() && r >= 0.0) {
                bail!("invalid parameter `scenario.goal_radius`: must be nonnegative");
            }
        }
        if self.scenario.kind == ScenarioKind::DatasetReplay && self.scenario.dataset.path.is_none()
        {
            bail!(
                "invalid parameter `scenario.dataset.path`: dataset_replay needs a trajectory file"
            );
        }
        Ok(())
    }

    pub fn rssac_config(&self) -> Result<RssacConfig> {
        let c = &self.rssac;
        let q = nalgebra::Matrix4::from_fn(|i, j| self.cost.q[i][j]);
        Ok(RssacConfig {
            sigma: c.sigma,
            samples: c.samples,
            t_calc: c.t_calc,
            dt_r: c.dt_r,
            u_max: c.u_max,
            epsilons: c.epsilons.clone(),
            nominal_magnitudes: c.nominal_magnitudes.clone(),
            nominal_headings: c.nominal_headings,
            grid: self.grid,
            cost: CostParams {
                q,
                r: self.cost.r,
                alpha: self.cost.alpha,
                lambda: self.cost.lambda,
                beta: self.cost.beta,
            },
            perturb: true,
        })
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = &self.scenario;
        let mut scenario = match s.kind {
            ScenarioKind::Intersection => intersection_scenario(&s.intersection)?,
            ScenarioKind::StaticField => static_field_scenario(s.static_field.humans)?,
            ScenarioKind::DatasetReplay => {
                let d = &s.dataset;
                let path = d
                    .path
                    .as_ref()
                    .context("dataset_replay needs scenario.dataset.path")?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read dataset {}", path.display()))?;
                let ds = parse_trajectory_file(&text)
                    .with_context(|| format!("invalid dataset {}", path.display()))?;
                dataset_replay_scenario(
                    Arc::new(ds),
                    d.start_frame,
                    d.robot_start,
                    d.goal,
                    d.duration,
                    PredictorConfig::default(),
                )?
            }
        };
        if let Some(p) = &s.predictor {
            scenario.predictor = p.clone();
        }
        scenario.grid = self.grid;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn goal_radius(&self) -> f64 {
        self.scenario
            .goal_radius
            .unwrap_or(match self.scenario.kind {
                ScenarioKind::Intersection => 0.0,
                _ => 1.0,
            })
    }

    pub fn controller(&self, kind: ControllerKind) -> Result<Box<dyn Controller>> {
        let config = self.rssac_config()?;
        Ok(match kind {
            ControllerKind::Rssac => Box::new(RssacController::new(config)?),
            ControllerKind::NominalOnly => Box::new(RssacController::nominal_only(config)?),
            ControllerKind::Exhaustive => Box::new(ExhaustiveTreeSearch::new(config)?),
            ControllerKind::Zero => Box::new(ZeroController {
                grid: config.grid,
                replan: config.replan_cells(),
            }),
        })
    }
}
