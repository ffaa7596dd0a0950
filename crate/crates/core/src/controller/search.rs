//! Discrete searches around the gradient step: the nominal-control search
//! that seeds each cycle and the line search over the insertion duration.

use std::f64::consts::PI;

use super::evaluate::{Evaluation, PlanningProblem};
use super::mig::{perturb_at_node, Perturbation};
use super::RssacConfig;
use crate::dynamics::ControlSchedule;
use crate::{Result, Vec2};

/// Constant inputs tried by the nominal search, in index order after the
/// keep-previous candidate: every magnitude × every heading.
pub fn nominal_candidates(config: &RssacConfig) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(config.nominal_magnitudes.len() * config.nominal_headings);
    for &a in &config.nominal_magnitudes {
        for h in 0..config.nominal_headings {
            let theta = 2.0 * PI * h as f64 / config.nominal_headings as f64;
            out.push(Vec2::new(theta.cos(), theta.sin()) * (a * config.u_max));
        }
    }
    out
}

/// Cells `[t0 + t_calc, t0 + t_calc + dt_o)` that a nominal candidate fills.
pub fn nominal_window(config: &RssacConfig) -> Result<std::ops::Range<usize>> {
    let start = config.grid.cells("t_calc", config.t_calc)?;
    Ok(start..(start + config.grid.ratio()).min(config.grid.n_cells()))
}

/// All nominal schedules: index 0 keeps `previous`, the rest splice one
/// constant candidate into the nominal window.
pub fn nominal_schedules(
    previous: &ControlSchedule,
    config: &RssacConfig,
) -> Result<Vec<ControlSchedule>> {
    let window = nominal_window(config)?;
    let mut out = vec![previous.clone()];
    out.extend(
        nominal_candidates(config)
            .into_iter()
            .map(|c| previous.with_constant(window.clone(), c)),
    );
    Ok(out)
}

/// Index of the smallest value; ties keep the earliest index.
pub fn argmin_index(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct NominalChoice {
    pub schedule: ControlSchedule,
    /// 0 = keep previous, `1 + c` = constant candidate `c`.
    pub index: usize,
    /// Entropic risk of every candidate, in index order.
    pub risks: Vec<f64>,
}

/// Evaluates the keep-previous schedule and every constant candidate on the
/// same samples and returns the one of least entropic risk.
pub fn nominal_search(
    problem: &PlanningProblem,
    previous: &ControlSchedule,
) -> Result<NominalChoice> {
    let config = &problem.config;
    let window = nominal_window(config)?;
    let schedules = nominal_schedules(previous, config)?;
    let base = problem.evaluate(&schedules[0])?;
    let mut risks = Vec::with_capacity(schedules.len());
    risks.push(problem.risk(&base.costs)?);
    for schedule in &schedules[1..] {
        let costs = problem.costs_from(&base, schedule, window.start)?;
        risks.push(problem.risk(&costs)?);
    }
    let index = argmin_index(&risks);
    Ok(NominalChoice {
        schedule: schedules[index].clone(),
        index,
        risks,
    })
}

#[derive(Debug, Clone)]
pub struct EpsilonChoice {
    pub epsilon: f64,
    /// Entropic risk for each configured duration, in order.
    pub risks: Vec<f64>,
}

/// Longest insertion that leaves `[t0, t0 + t_calc]` untouched.
pub(crate) fn max_epsilon(perturbation: &Perturbation, config: &RssacConfig) -> f64 {
    let calc = (config.t_calc / config.grid.dt_c).round() as usize;
    perturbation.tau_node.saturating_sub(calc) as f64 * config.grid.dt_c
}

/// Re-simulates the nominal schedule perturbed by `(v, τ, ε)` for every
/// configured `ε` on the same samples and returns the duration of least
/// entropic risk (earliest on ties). Durations reaching into the
/// computation window are clipped to end at `t0 + t_calc`.
pub fn epsilon_search(
    problem: &PlanningProblem,
    nominal: &ControlSchedule,
    base: &Evaluation,
    perturbation: &Perturbation,
) -> Result<EpsilonChoice> {
    let config = &problem.config;
    let limit = max_epsilon(perturbation, config);
    let base_risk = problem.risk(&base.costs)?;
    let mut risks = Vec::with_capacity(config.epsilons.len());
    for &eps in &config.epsilons {
        let eps = eps.min(limit);
        if eps <= 0.0 {
            risks.push(base_risk);
            continue;
        }
        let (schedule, first) =
            perturb_at_node(nominal, &perturbation.v, perturbation.tau_node, eps);
        let costs = problem.costs_from(base, &schedule, first)?;
        risks.push(problem.risk(&costs)?);
    }
    let best = argmin_index(&risks);
    Ok(EpsilonChoice {
        epsilon: config.epsilons[best].min(limit),
        risks,
    })
}
