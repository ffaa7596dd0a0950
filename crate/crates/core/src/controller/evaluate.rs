//! Monte Carlo evaluation of candidate schedules: forward rollouts, sampled
//! costs and backward adjoints.

use rayon::prelude::*;

use super::RssacConfig;
use crate::cost::{
    collision_cost, collision_cost_and_gradient, lq_cost, tracking_cost, CostParams,
    ReferenceTrajectory,
};
use crate::dynamics::{robot_rollout, robot_rollout_into, ControlSchedule, HumanPath, JointState};
use crate::predictor::HumanTransitionSamples;
use crate::risk::entropic_risk;
use crate::{Error, Result, Vec2, Vec4};

/// Backward solution of the adjoint equation on the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointTrajectory {
    pub rho: Vec<Vec4>,
}

/// Everything one planning cycle evaluates schedules against: the initial
/// robot state, the sampled reference, and one human path per Monte Carlo
/// sample. The same paths are reused for every candidate schedule.
#[derive(Debug, Clone)]
pub struct PlanningProblem {
    pub t0: f64,
    pub x0: Vec4,
    pub reference: Vec<Vec4>,
    pub humans: Vec<HumanPath>,
    pub config: RssacConfig,
}

/// Costs of every sample under one schedule, plus the running sums that let
/// schedules sharing a prefix skip re-evaluating it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub robot: Vec<Vec4>,
    /// `partial[j][k]`: accumulated running cost of sample `j` over cells `< k`.
    pub partial: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

impl PlanningProblem {
    pub fn new(
        s0: &JointState,
        reference: &ReferenceTrajectory,
        samples: &HumanTransitionSamples,
        config: &RssacConfig,
    ) -> Result<Self> {
        let grid = &config.grid;
        let initial = s0.human_positions();
        if samples.n_humans != initial.len() {
            return Err(Error::DimensionMismatch {
                context: "human samples",
                expected: initial.len(),
                actual: samples.n_humans,
            });
        }
        if samples.is_empty() {
            return Err(Error::Empty("human transition samples"));
        }
        let first_jump = grid.first_jump_cell(s0.time);
        let humans = samples
            .samples
            .iter()
            .map(|y| HumanPath::new(&initial, y, grid, first_jump))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            t0: s0.time,
            x0: s0.robot.to_vector(),
            reference: reference.sample(s0.time, grid.dt_c, grid.n_nodes()),
            humans,
            config: config.clone(),
        })
    }

    /// Problem over explicit human paths (one per sample).
    pub fn from_paths(
        t0: f64,
        x0: Vec4,
        reference: Vec<Vec4>,
        humans: Vec<HumanPath>,
        config: &RssacConfig,
    ) -> Result<Self> {
        if reference.len() != config.grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "reference has {} nodes, grid has {}",
                reference.len(),
                config.grid.n_nodes()
            )));
        }
        if humans.is_empty() {
            return Err(Error::Empty("human paths"));
        }
        Ok(Self {
            t0,
            x0,
            reference,
            humans,
            config: config.clone(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.humans.len()
    }

    fn params(&self) -> &CostParams {
        &self.config.cost
    }

    fn check(&self, u: &ControlSchedule) -> Result<()> {
        let grid = &self.config.grid;
        if u.len() != grid.n_cells() {
            return Err(Error::GridMismatch(format!(
                "schedule has {} cells, horizon needs {}",
                u.len(),
                grid.n_cells()
            )));
        }
        if (u.t0() - self.t0).abs() > 1e-9 || (u.dt_c() - grid.dt_c).abs() > 1e-12 {
            return Err(Error::GridMismatch(format!(
                "schedule starts at {} (step {}), problem at {} (step {})",
                u.t0(),
                u.dt_c(),
                self.t0,
                grid.dt_c
            )));
        }
        Ok(())
    }

    /// Rolls out `u` and returns the sampled costs `J_j`.
    pub fn evaluate(&self, u: &ControlSchedule) -> Result<Evaluation> {
        self.check(u)?;
        let robot = robot_rollout(&crate::dynamics::RobotState::from_vector(&self.x0), u);
        let (partial, costs) = self.accumulate(&robot, u, 0, None);
        Ok(Evaluation {
            robot,
            partial,
            costs,
        })
    }

    /// Costs of `u`, which must agree with the schedule behind `base` on
    /// every cell before `first_cell`.
    pub fn costs_from(
        &self,
        base: &Evaluation,
        u: &ControlSchedule,
        first_cell: usize,
    ) -> Result<Vec<f64>> {
        self.check(u)?;
        let first_cell = first_cell.min(u.len());
        let mut robot = Vec::with_capacity(u.len() + 1);
        robot.extend_from_slice(&base.robot[..=first_cell]);
        robot_rollout_into(&mut robot, &u.inputs()[first_cell..], u.dt_c());
        Ok(self.accumulate(&robot, u, first_cell, Some(base)).1)
    }

    /// Entropic risk of the sampled costs at the configured sensitivity.
    pub fn risk(&self, costs: &[f64]) -> Result<f64> {
        entropic_risk(costs, self.config.sigma)
    }

    fn accumulate(
        &self,
        robot: &[Vec4],
        u: &ControlSchedule,
        from: usize,
        base: Option<&Evaluation>,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let params = self.params();
        let n = u.len();
        let dt = u.dt_c();
        // Sample-independent part of the running cost.
        let lq: Vec<f64> = (from..n)
            .map(|k| lq_cost(&robot[k], &u.input(k), &self.reference[k], params))
            .collect();
        let terminal_tracking =
            params.beta * tracking_cost(&robot[n], &self.reference[n], &params.q);
        let keep_partial = base.is_none();
        let results: Vec<(Vec<f64>, f64)> = self
            .humans
            .par_iter()
            .enumerate()
            .map(|(j, path)| {
                let mut acc = base.map_or(0.0, |b| b.partial[j][from]);
                let mut partial = Vec::new();
                if keep_partial {
                    partial.reserve(n + 1);
                    partial.push(acc);
                }
                for k in from..n {
                    let x = &robot[k];
                    let col = collision_cost(&Vec2::new(x[0], x[1]), path.at_node(k), params);
                    acc += dt * (lq[k - from] + col);
                    if keep_partial {
                        partial.push(acc);
                    }
                }
                let x = &robot[n];
                let col = collision_cost(&Vec2::new(x[0], x[1]), path.at_node(n), params);
                (partial, acc + (terminal_tracking + params.beta * col))
            })
            .collect();
        results.into_iter().unzip()
    }

    /// Adjoint trajectories of every sample under the evaluated schedule.
    pub fn adjoints(
        &self,
        eval: &Evaluation,
        u: &ControlSchedule,
    ) -> Result<Vec<AdjointTrajectory>> {
        self.check(u)?;
        self.humans
            .par_iter()
            .map(|path| adjoint_rollout(&eval.robot, u, path, &self.reference, self.params()))
            .collect()
    }
}

/// Integrates the adjoint backward from `ρ_N = ∂h/∂x(x_N)`:
///
/// `ρ_k = ρ_{k+1} + dt·[∂c/∂x(x_k) + (∂f/∂x + ∂(Hu)/∂x)ᵀ ρ_{k+1}]`.
///
/// This is the exact gradient `∂J/∂x_k` of the forward-Euler,
/// left-rectangle discretization of the cost, so the mode insertion
/// gradient built from it matches finite differences of `J` to first order
/// in the perturbation length.
pub fn adjoint_rollout(
    robot: &[Vec4],
    u: &ControlSchedule,
    humans: &HumanPath,
    reference: &[Vec4],
    params: &CostParams,
) -> Result<AdjointTrajectory> {
    let n = u.len();
    if robot.len() != n + 1 || reference.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "adjoint needs {} nodes, got robot {} and reference {}",
            n + 1,
            robot.len(),
            reference.len()
        )));
    }
    let dt = u.dt_c();
    let grad = |k: usize| {
        let x = &robot[k];
        let (_, g) = collision_cost_and_gradient(&Vec2::new(x[0], x[1]), humans.at_node(k), params);
        params.q * (x - reference[k]) + Vec4::new(g.x, g.y, 0.0, 0.0)
    };
    let mut rho = vec![Vec4::zeros(); n + 1];
    rho[n] = grad(n) * params.beta;
    for k in (0..n).rev() {
        let next = rho[k + 1];
        // double integrator: (∂f/∂x)ᵀ ρ = (0, 0, ρ_px, ρ_py); ∂(Hu)/∂x = 0
        let drift_term = Vec4::new(0.0, 0.0, next[0], next[1]);
        rho[k] = next + (grad(k) + drift_term) * dt;
    }
    Ok(AdjointTrajectory { rho })
}
