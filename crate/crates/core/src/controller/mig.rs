//! Mode insertion gradient of the entropic risk, its minimization over the
//! inserted control and insertion time, and schedule perturbation.

use crate::dynamics::{input_matrix, input_matrix_transpose_mul, ControlSchedule};
use crate::error::invalid;
use crate::risk::{mean_adjoint, risk_factors, weighted_adjoint};
use crate::{Error, Result, Vec2, Vec4};

use super::evaluate::AdjointTrajectory;
use super::RssacConfig;

/// A single control insertion: hold `v` on `(τ − ε, τ]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Perturbation {
    pub v: Vec2,
    /// Absolute insertion time, seconds.
    pub tau: f64,
    /// Grid node of `tau` relative to the horizon start.
    pub tau_node: usize,
    /// Optimal mode insertion gradient at `(v, tau)`.
    pub mig: f64,
    pub epsilon: f64,
}

/// How per-sample adjoints are combined into one costate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointReduction {
    /// `E[e^{σJ} ρ] / E[e^{σJ}]`.
    RiskWeighted,
    /// `E[ρ]`, the risk-neutral estimator.
    PlainMean,
}

/// `½vᵀRv + ρ̄ᵀH(x)(v − u) − ½uᵀRu` with `R = r·I`.
pub fn entropic_mig(v: &Vec2, rho_bar: &Vec4, x: &Vec4, u: &Vec2, r: f64) -> f64 {
    let h = input_matrix(x);
    (0.5 * r * v.dot(v) + rho_bar.dot(&(h * (v - u)))) - 0.5 * r * u.dot(u)
}

/// Minimizer of the mode insertion gradient over the disk `‖v‖ ≤ u_max`.
///
/// With `R = r·I` the objective is isotropic, so the constrained optimum is
/// the unconstrained one `−(1/r)Hᵀρ̄` radially projected onto the disk.
/// If rounding leaves that value above zero, the nominal input itself
/// (value exactly 0) is returned instead.
pub fn optimal_action(
    rho_bar: &Vec4,
    x: &Vec4,
    u_tau: &Vec2,
    r: f64,
    u_max: f64,
) -> Result<(Vec2, f64)> {
    if !(r.is_finite() && r > 0.0) {
        return Err(invalid("r", "control weight must be positive"));
    }
    let unconstrained = -input_matrix_transpose_mul(x, rho_bar) / r;
    let norm = unconstrained.norm();
    let v = if norm > u_max {
        unconstrained * (u_max / norm)
    } else {
        unconstrained
    };
    let value = entropic_mig(&v, rho_bar, x, u_tau, r);
    if value > 0.0 {
        Ok((*u_tau, entropic_mig(u_tau, rho_bar, x, u_tau, r)))
    } else {
        Ok((v, value))
    }
}

/// Combines per-sample adjoints into one costate per grid node.
pub fn reduce_adjoints(
    costs: &[f64],
    adjoints: &[AdjointTrajectory],
    sigma: f64,
    reduction: AdjointReduction,
) -> Result<Vec<Vec4>> {
    if costs.len() != adjoints.len() {
        return Err(Error::DimensionMismatch {
            context: "adjoint reduction",
            expected: adjoints.len(),
            actual: costs.len(),
        });
    }
    let first = adjoints.first().ok_or(Error::Empty("adjoint sample"))?;
    let nodes = first.rho.len();
    let factors = risk_factors(costs, sigma);
    let mut column = Vec::with_capacity(adjoints.len());
    (0..nodes)
        .map(|k| {
            column.clear();
            column.extend(adjoints.iter().map(|a| a.rho[k]));
            match reduction {
                AdjointReduction::RiskWeighted => weighted_adjoint(&factors, &column),
                AdjointReduction::PlainMean => mean_adjoint(&column),
            }
        })
        .collect()
}

/// Searches every grid node `τ ∈ (t0 + t_calc, t_T)` for the most negative
/// optimal mode insertion gradient; ties go to the earliest node.
pub fn optimize_perturbation(
    rho_bar: &[Vec4],
    robot: &[Vec4],
    u: &ControlSchedule,
    config: &RssacConfig,
) -> Result<Perturbation> {
    let n = u.len();
    if rho_bar.len() != n + 1 || robot.len() != n + 1 {
        return Err(Error::GridMismatch(format!(
            "costate/robot need {} nodes, got {} and {}",
            n + 1,
            rho_bar.len(),
            robot.len()
        )));
    }
    let calc = config.grid.cells("t_calc", config.t_calc)?;
    let mut best: Option<Perturbation> = None;
    for m in (calc + 1)..n {
        let u_tau = u.input(m - 1);
        let (v, mig) = optimal_action(&rho_bar[m], &robot[m], &u_tau, config.cost.r, config.u_max)?;
        if best.is_none_or(|b| mig < b.mig) {
            best = Some(Perturbation {
                v,
                tau: u.t0() + m as f64 * u.dt_c(),
                tau_node: m,
                mig,
                epsilon: 0.0,
            });
        }
    }
    best.ok_or(Error::Empty("insertion time grid"))
}

/// Splits a duration into whole cells plus a fractional remainder.
fn cells_and_fraction(epsilon: f64, dt: f64) -> (usize, f64) {
    let e = epsilon / dt;
    let whole = (e + 1e-9).floor();
    let frac = e - whole;
    (whole as usize, if frac < 1e-9 { 0.0 } else { frac })
}

/// Applies `v` on the cells ending at node `tau_node` that cover a duration
/// `epsilon`. A remainder shorter than a cell blends that cell's input
/// toward `v` by the covered fraction, preserving the first-order effect
/// `ε·(v − u)`. Returns the schedule and its first modified cell.
pub(crate) fn perturb_at_node(
    u: &ControlSchedule,
    v: &Vec2,
    tau_node: usize,
    epsilon: f64,
) -> (ControlSchedule, usize) {
    let mut out = u.clone();
    if epsilon <= 0.0 {
        return (out, u.len());
    }
    let (whole, frac) = cells_and_fraction(epsilon, u.dt_c());
    let end = tau_node.min(u.len());
    let start = end.saturating_sub(whole);
    let inputs = out.inputs_mut();
    for cell in &mut inputs[start..end] {
        *cell = *v;
    }
    let mut first = start;
    if frac > 0.0 && start > 0 {
        let k = start - 1;
        inputs[k] += (v - inputs[k]) * frac;
        first = k;
    }
    (out, first)
}

/// `u^ε(t) = v` on `(τ − ε, τ]`, `u(t)` elsewhere, on whole integration
/// cells ending at `τ` (which must lie on the grid).
pub fn perturb_schedule(
    u: &ControlSchedule,
    v: &Vec2,
    tau: f64,
    epsilon: f64,
) -> Result<ControlSchedule> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(invalid("epsilon", "must be finite and nonnegative"));
    }
    if !(v.x.is_finite() && v.y.is_finite()) {
        return Err(Error::NonFinite("perturbation control"));
    }
    let rel = (tau - u.t0()) / u.dt_c();
    let node = rel.round();
    if !(rel.is_finite()) || (rel - node).abs() > 1e-6 || node < 0.0 || node as usize > u.len() {
        return Err(Error::GridMismatch(format!(
            "insertion time {tau} is not a node of the schedule grid"
        )));
    }
    Ok(perturb_at_node(u, v, node as usize, epsilon).0)
}
