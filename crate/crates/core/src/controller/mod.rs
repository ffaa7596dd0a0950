//! The RSSAC controller.
//!
//! One control cycle:
//!
//! 1. shift the previous schedule to the current time (zero-padded tail);
//! 2. draw `M` human futures and pick the best nominal schedule among the
//!    keep-previous and constant candidates;
//! 3. roll the nominal out per sample and integrate the adjoints backward;
//! 4. combine the adjoints with risk weights `∝ exp(σ·J_j)`;
//! 5. minimize the mode insertion gradient over `(v, τ)`;
//! 6. line-search the insertion duration `ε` and apply the perturbation.

mod evaluate;
mod mig;
mod search;

pub use evaluate::{adjoint_rollout, AdjointTrajectory, Evaluation, PlanningProblem};
pub use mig::{
    entropic_mig, optimal_action, optimize_perturbation, perturb_schedule, reduce_adjoints,
    AdjointReduction, Perturbation,
};
pub use search::{
    argmin_index, epsilon_search, nominal_candidates, nominal_schedules, nominal_search,
    nominal_window, EpsilonChoice, NominalChoice,
};

use crate::cost::{CostParams, ReferenceTrajectory};
use crate::dynamics::{ControlSchedule, JointState, TimeGrid};
use crate::error::invalid;
use crate::predictor::{HumanObservation, MotionPredictor};
use crate::risk::validate_sigma;
use crate::{Error, Result, Vec4};

#[derive(Debug, Clone, PartialEq)]
pub struct RssacConfig {
    /// Risk sensitivity; 0 is risk-neutral.
    pub sigma: f64,
    /// Monte Carlo sample count `M`.
    pub samples: usize,
    /// Computation budget; the schedule is frozen on `[t0, t0 + t_calc]`.
    pub t_calc: f64,
    /// Replanning interval.
    pub dt_r: f64,
    pub u_max: f64,
    /// Candidate insertion durations, sorted, containing 0.
    pub epsilons: Vec<f64>,
    /// Nominal candidate magnitudes as fractions of `u_max`.
    pub nominal_magnitudes: Vec<f64>,
    pub nominal_headings: usize,
    pub grid: TimeGrid,
    pub cost: CostParams,
    /// When false only the nominal search runs.
    pub perturb: bool,
}

impl Default for RssacConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            samples: 30,
            t_calc: 0.1,
            dt_r: 0.1,
            u_max: 5.0,
            epsilons: vec![0.0, 1e-3, 2e-3, 4e-3, 8e-3, 1.6e-2, 2e-2, 4e-2, 8e-2],
            nominal_magnitudes: vec![0.4, 0.8],
            nominal_headings: 8,
            grid: TimeGrid::default(),
            cost: CostParams::default(),
            perturb: true,
        }
    }
}

impl RssacConfig {
    pub fn validate(&self) -> Result<()> {
        validate_sigma(self.sigma)?;
        self.grid.validate()?;
        self.cost.validate()?;
        if self.samples == 0 {
            return Err(invalid("samples", "need at least one Monte Carlo sample"));
        }
        if !(self.u_max.is_finite() && self.u_max > 0.0) {
            return Err(invalid("u_max", "must be positive"));
        }
        let calc = self.grid.cells("t_calc", self.t_calc)?;
        let replan = self.grid.cells("dt_r", self.dt_r)?;
        if replan == 0 {
            return Err(invalid("dt_r", "must be at least one integration step"));
        }
        if calc > replan {
            return Err(invalid("t_calc", "must not exceed dt_r"));
        }
        if calc + 1 >= self.grid.n_cells() {
            return Err(invalid(
                "t_calc",
                "leaves no insertion times in the horizon",
            ));
        }
        if self.epsilons.is_empty() || self.epsilons[0] != 0.0 {
            return Err(invalid("epsilons", "must start with 0"));
        }
        if self.epsilons.windows(2).any(|w| w[0] >= w[1])
            || self.epsilons.iter().any(|e| !e.is_finite())
        {
            return Err(invalid(
                "epsilons",
                "must be finite and strictly increasing",
            ));
        }
        if self
            .nominal_magnitudes
            .iter()
            .any(|a| !(a.is_finite() && *a >= 0.0 && *a <= 1.0))
        {
            return Err(invalid(
                "nominal_magnitudes",
                "fractions of u_max must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    pub fn replan_cells(&self) -> usize {
        (self.dt_r / self.grid.dt_c).round() as usize
    }

    /// Total nominal candidates including keep-previous.
    pub fn candidate_count(&self) -> usize {
        1 + self.nominal_magnitudes.len() * self.nominal_headings
    }
}

/// Outcome of one control cycle.
#[derive(Debug, Clone)]
pub struct RssacOutput {
    pub schedule: ControlSchedule,
    pub nominal_index: usize,
    pub nominal_risks: Vec<f64>,
    /// Absent when the perturbation stage is disabled.
    pub perturbation: Option<Perturbation>,
    /// Entropic risk of the nominal and of the returned schedule.
    pub risk_nominal: f64,
    pub risk_final: f64,
}

/// Re-anchors `previous` at `t0`, dropping elapsed cells and zero-padding
/// to a full horizon.
pub fn shift_schedule(
    previous: &ControlSchedule,
    t0: f64,
    grid: &TimeGrid,
) -> Result<ControlSchedule> {
    let elapsed = (t0 - previous.t0()) / grid.dt_c;
    let cells = elapsed.round();
    if !elapsed.is_finite() || cells < 0.0 || (elapsed - cells).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "cannot shift a schedule starting at {} to {t0}",
            previous.t0()
        )));
    }
    let mut inputs: Vec<_> = previous
        .inputs()
        .iter()
        .skip(cells as usize)
        .copied()
        .collect();
    inputs.resize(grid.n_cells(), crate::Vec2::zeros());
    ControlSchedule::new(t0, grid.dt_c, inputs, f64::INFINITY)
}

/// Runs steps 3–6 of the cycle on an already chosen nominal schedule.
pub fn perturb_nominal(
    problem: &PlanningProblem,
    nominal: &ControlSchedule,
    reduction: AdjointReduction,
) -> Result<(ControlSchedule, Perturbation, f64, f64)> {
    let config = &problem.config;
    let eval = problem.evaluate(nominal)?;
    let adjoints = problem.adjoints(&eval, nominal)?;
    let rho_bar = reduce_adjoints(&eval.costs, &adjoints, config.sigma, reduction)?;
    let mut perturbation = optimize_perturbation(&rho_bar, &eval.robot, nominal, config)?;
    let risk_nominal = problem.risk(&eval.costs)?;
    if perturbation.mig >= 0.0 {
        return Ok((nominal.clone(), perturbation, risk_nominal, risk_nominal));
    }
    let choice = epsilon_search(problem, nominal, &eval, &perturbation)?;
    perturbation.epsilon = choice.epsilon;
    let best = choice.risks.iter().copied().fold(f64::INFINITY, f64::min);
    let schedule = perturb_schedule(nominal, &perturbation.v, perturbation.tau, choice.epsilon)?;
    Ok((schedule, perturbation, risk_nominal, best))
}

/// One full RSSAC control cycle at state `s0`. `humans` must list the
/// observations of `s0.humans` in the same order; `seed` keys the Monte
/// Carlo streams of this cycle.
pub fn rssac_step(
    s0: &JointState,
    humans: &[HumanObservation],
    reference: &ReferenceTrajectory,
    u_prev: &ControlSchedule,
    predictor: &dyn MotionPredictor,
    config: &RssacConfig,
    seed: u64,
) -> Result<RssacOutput> {
    config.validate()?;
    if humans.len() != s0.humans.len() {
        return Err(Error::DimensionMismatch {
            context: "human observations",
            expected: s0.humans.len(),
            actual: humans.len(),
        });
    }
    let grid = &config.grid;
    let previous = shift_schedule(u_prev, s0.time, grid)?;
    let m = config.samples;
    let t = grid.horizon_steps;

    let (problem, choice) = if predictor.is_conditional() {
        // The sample distribution depends on the candidate robot future, so
        // every candidate gets its own draw (same streams).
        let schedules = nominal_schedules(&previous, config)?;
        let mut risks = Vec::with_capacity(schedules.len());
        let mut problems = Vec::with_capacity(schedules.len());
        for schedule in &schedules {
            let path: Vec<Vec4> = crate::dynamics::robot_rollout(&s0.robot, schedule);
            let samples = predictor.sample(humans, m, t, seed, Some(&path))?;
            let problem = PlanningProblem::new(s0, reference, &samples, config)?;
            let eval = problem.evaluate(schedule)?;
            risks.push(problem.risk(&eval.costs)?);
            problems.push(problem);
        }
        let index = argmin_index(&risks);
        let problem = problems.swap_remove(index);
        (
            problem,
            NominalChoice {
                schedule: schedules[index].clone(),
                index,
                risks,
            },
        )
    } else {
        let samples = predictor.sample(humans, m, t, seed, None)?;
        let problem = PlanningProblem::new(s0, reference, &samples, config)?;
        let choice = nominal_search(&problem, &previous)?;
        (problem, choice)
    };

    let nominal_risk = choice.risks[choice.index];
    if !config.perturb {
        return Ok(RssacOutput {
            schedule: choice.schedule,
            nominal_index: choice.index,
            nominal_risks: choice.risks,
            perturbation: None,
            risk_nominal: nominal_risk,
            risk_final: nominal_risk,
        });
    }
    let (schedule, perturbation, risk_nominal, risk_final) =
        perturb_nominal(&problem, &choice.schedule, AdjointReduction::RiskWeighted)?;
    Ok(RssacOutput {
        schedule,
        nominal_index: choice.index,
        nominal_risks: choice.risks,
        perturbation: Some(perturbation),
        risk_nominal,
        risk_final,
    })
}
