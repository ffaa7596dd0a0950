//! Controllers the episode engine can drive: RSSAC, its nominal-search-only
//! ablation, exhaustive tree search and a zero-input baseline.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::controller::{argmin_index, rssac_step, shift_schedule, PlanningProblem, RssacConfig};
use crate::cost::ReferenceTrajectory;
use crate::dynamics::{ControlSchedule, JointState, TimeGrid};
use crate::predictor::{HumanObservation, MotionPredictor};
use crate::{Error, Result, Vec2};

/// Inputs of one planning call.
pub struct PlanContext<'a> {
    pub state: &'a JointState,
    pub humans: &'a [HumanObservation],
    pub reference: &'a ReferenceTrajectory,
    pub previous: &'a ControlSchedule,
    pub predictor: &'a dyn MotionPredictor,
    pub seed: u64,
}

pub trait Controller: Send + Sync {
    fn name(&self) -> &str;

    /// Replanning period in integration cells.
    fn replan_cells(&self) -> usize;

    /// Schedule to apply from `ctx.state.time` on.
    fn plan(&self, ctx: &PlanContext<'_>) -> Result<ControlSchedule>;
}

/// RSSAC, optionally with the perturbation stage disabled.
#[derive(Debug, Clone)]
pub struct RssacController {
    pub config: RssacConfig,
    name: String,
}

impl RssacController {
    pub fn new(config: RssacConfig) -> Result<Self> {
        config.validate()?;
        let name = if config.perturb {
            "rssac"
        } else {
            "nominal_only"
        };
        Ok(Self {
            config,
            name: name.into(),
        })
    }

    /// Nominal search alone: the best of the 17 candidate schedules.
    pub fn nominal_only(config: RssacConfig) -> Result<Self> {
        Self::new(RssacConfig {
            perturb: false,
            ..config
        })
    }
}

impl Controller for RssacController {
    fn name(&self) -> &str {
        &self.name
    }

    fn replan_cells(&self) -> usize {
        self.config.replan_cells()
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<ControlSchedule> {
        match rssac_step(
            ctx.state,
            ctx.humans,
            ctx.reference,
            ctx.previous,
            ctx.predictor,
            &self.config,
            ctx.seed,
        ) {
            Ok(out) => Ok(out.schedule),
            Err(_) => shift_schedule(ctx.previous, ctx.state.time, &self.config.grid),
        }
    }
}

/// Applies no control at all.
#[derive(Debug, Clone)]
pub struct ZeroController {
    pub grid: TimeGrid,
    pub replan: usize,
}

impl Default for ZeroController {
    fn default() -> Self {
        Self {
            grid: TimeGrid::default(),
            replan: 5,
        }
    }
}

impl Controller for ZeroController {
    fn name(&self) -> &str {
        "zero"
    }

    fn replan_cells(&self) -> usize {
        self.replan
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<ControlSchedule> {
        Ok(ControlSchedule::zeros(
            ctx.state.time,
            self.grid.dt_c,
            self.grid.n_cells(),
        ))
    }
}

/// Brute-force search over every sequence of `depth` constant actions, each
/// held for one observation interval after the frozen computation window.
#[derive(Debug, Clone)]
pub struct ExhaustiveTreeSearch {
    /// Risk, sampling, cost and limit settings; `t_calc` and `dt_r` are the
    /// frozen window and replanning period.
    pub config: RssacConfig,
    pub depth: usize,
    /// Nonzero action magnitude as a fraction of `u_max`.
    pub magnitude: f64,
    pub headings: usize,
}

impl ExhaustiveTreeSearch {
    /// Depth 4, actions `{0} ∪ {0.6·u_max × 8 headings}`, replanning every
    /// observation interval.
    pub fn new(config: RssacConfig) -> Result<Self> {
        let dt_o = config.grid.dt_o;
        let search = Self {
            config: RssacConfig {
                t_calc: dt_o,
                dt_r: dt_o,
                ..config
            },
            depth: 4,
            magnitude: 0.6,
            headings: 8,
        };
        search.planning_config().validate()?;
        Ok(search)
    }

    pub fn actions(&self) -> Vec<Vec2> {
        let a = self.magnitude * self.config.u_max;
        std::iter::once(Vec2::zeros())
            .chain((0..self.headings).map(|h| {
                let theta = 2.0 * PI * h as f64 / self.headings as f64;
                Vec2::new(theta.cos(), theta.sin()) * a
            }))
            .collect()
    }

    pub fn sequences_evaluated(&self) -> usize {
        self.actions().len().pow(self.depth as u32)
    }

    /// Grid covering the frozen window plus the searched actions.
    fn planning_config(&self) -> RssacConfig {
        let ratio = self.config.grid.ratio();
        let calc = (self.config.t_calc / self.config.grid.dt_c).round() as usize;
        RssacConfig {
            grid: TimeGrid {
                horizon_steps: self.depth + calc.div_ceil(ratio),
                ..self.config.grid
            },
            ..self.config.clone()
        }
    }

    /// Entropic risk of every action sequence (index = base-`|actions|`
    /// digits, first action most significant) on one set of samples.
    pub fn sequence_risks(
        &self,
        problem: &PlanningProblem,
        frozen: &ControlSchedule,
    ) -> Result<Vec<f64>> {
        let actions = self.actions();
        let ratio = problem.config.grid.ratio();
        let start = (problem.config.t_calc / problem.config.grid.dt_c).round() as usize;
        let n_actions = actions.len();
        let last = start + (self.depth - 1) * ratio;
        let per_prefix: Vec<Vec<f64>> = (0..n_actions.pow(self.depth as u32 - 1))
            .into_par_iter()
            .map(|prefix| {
                let mut schedule = frozen.clone();
                let mut rest = prefix;
                for level in (0..self.depth - 1).rev() {
                    let cells = start + level * ratio..start + (level + 1) * ratio;
                    schedule = schedule.with_constant(cells, actions[rest % n_actions]);
                    rest /= n_actions;
                }
                let base = problem.evaluate(&schedule)?;
                actions
                    .iter()
                    .map(|&a| {
                        let leaf = schedule.with_constant(last..last + ratio, a);
                        problem.risk(&problem.costs_from(&base, &leaf, last)?)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(per_prefix.concat())
    }
}

impl Controller for ExhaustiveTreeSearch {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn replan_cells(&self) -> usize {
        self.config.replan_cells()
    }

    fn plan(&self, ctx: &PlanContext<'_>) -> Result<ControlSchedule> {
        let config = self.planning_config();
        let grid = config.grid;
        let frozen = shift_schedule(ctx.previous, ctx.state.time, &grid)?;
        let samples = ctx.predictor.sample(
            ctx.humans,
            config.samples,
            grid.horizon_steps,
            ctx.seed,
            None,
        )?;
        let problem = PlanningProblem::new(ctx.state, ctx.reference, &samples, &config)?;
        let risks = self.sequence_risks(&problem, &frozen)?;
        let best = argmin_index(&risks);
        let actions = self.actions();
        let ratio = grid.ratio();
        let start = (config.t_calc / grid.dt_c).round() as usize;
        let mut schedule = frozen;
        let mut index = best;
        for level in (0..self.depth).rev() {
            let a = actions[index % actions.len()];
            index /= actions.len();
            schedule =
                schedule.with_constant(start + level * ratio..start + (level + 1) * ratio, a);
        }
        if schedule.max_norm() > config.u_max * (1.0 + 1e-12) {
            return Err(Error::Controller(
                "exhaustive search produced an infeasible input".into(),
            ));
        }
        Ok(schedule)
    }
}
