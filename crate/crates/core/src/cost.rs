//! Trajectory cost: LQ tracking plus a Gaussian collision penalty, the
//! terminal cost, their state gradients and the quadrature of the cost
//! functional on the integration grid.

use nalgebra::Matrix4;

use crate::dynamics::{ControlSchedule, JointState, JointTrajectory};
use crate::error::invalid;
use crate::{Error, Result, Vec2, Vec4};

/// Cost weights. The control weight is the scaled identity `r·I`, which the
/// closed-form perturbation solution relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub q: Matrix4<f64>,
    pub r: f64,
    /// Collision peak.
    pub alpha: f64,
    /// Collision bandwidth, m².
    pub lambda: f64,
    /// Terminal weight.
    pub beta: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vec4::new(0.5, 0.5, 0.0, 0.0)),
            r: 0.2,
            alpha: 100.0,
            lambda: 0.2,
            beta: 0.1,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|v| !v.is_finite()) {
            return Err(invalid("q", "entries must be finite"));
        }
        if (self.q - self.q.transpose()).abs().max() > 1e-12 {
            return Err(invalid("q", "must be symmetric"));
        }
        let min_eig = self.q.symmetric_eigen().eigenvalues.min();
        if min_eig < -1e-12 {
            return Err(invalid(
                "q",
                format!("must be PSD (min eigenvalue {min_eig})"),
            ));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(invalid("r", "control weight must be positive"));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(invalid("alpha", "must be nonnegative"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(invalid("beta", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn r_matrix(&self) -> nalgebra::Matrix2<f64> {
        nalgebra::Matrix2::identity() * self.r
    }
}

/// Straight line from `start` to `goal` traversed at constant `speed`,
/// starting at absolute time `t_start`, then holding at the goal.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReferenceTrajectory {
    pub start: Vec2,
    pub goal: Vec2,
    pub speed: f64,
    pub t_start: f64,
}

impl ReferenceTrajectory {
    pub fn new(start: Vec2, goal: Vec2, speed: f64, t_start: f64) -> Result<Self> {
        if !(speed.is_finite() && speed > 0.0) {
            return Err(invalid("reference_speed", "must be positive"));
        }
        if start.iter().chain(goal.iter()).any(|v| !v.is_finite()) || !t_start.is_finite() {
            return Err(Error::NonFinite("reference trajectory"));
        }
        Ok(Self {
            start,
            goal,
            speed,
            t_start,
        })
    }

    pub fn length(&self) -> f64 {
        (self.goal - self.start).norm()
    }

    /// Reference state (position, velocity) at absolute time `t`.
    pub fn state_at(&self, t: f64) -> Vec4 {
        let length = self.length();
        if length == 0.0 {
            return Vec4::new(self.goal.x, self.goal.y, 0.0, 0.0);
        }
        let dir = (self.goal - self.start) / length;
        let travelled = (self.speed * (t - self.t_start)).clamp(0.0, length);
        let p = self.start + dir * travelled;
        let v = if travelled < length && t >= self.t_start {
            dir * self.speed
        } else {
            Vec2::zeros()
        };
        Vec4::new(p.x, p.y, v.x, v.y)
    }

    /// Reference states on `n_nodes` grid nodes starting at `t0`.
    pub fn sample(&self, t0: f64, dt_c: f64, n_nodes: usize) -> Vec<Vec4> {
        (0..n_nodes)
            .map(|n| self.state_at(t0 + n as f64 * dt_c))
            .collect()
    }
}

/// Collision terms with an exponent below this (each `< α·5.8e-19`) are
/// dropped.
const EXPONENT_CUTOFF: f64 = -42.0;

/// `Σᵢ α·exp(−‖x_p − pⁱ‖² / (2λ))`.
pub fn collision_cost(x_p: &Vec2, humans: &[Vec2], params: &CostParams) -> f64 {
    let inv = 1.0 / (2.0 * params.lambda);
    let mut value = 0.0;
    for p in humans {
        let e = -(x_p - p).norm_squared() * inv;
        if e > EXPONENT_CUTOFF {
            value += params.alpha * e.exp();
        }
    }
    value
}

/// `∂c_col/∂x_p = Σᵢ −(α/λ)·exp(−‖dᵢ‖²/(2λ))·dᵢ` with `dᵢ = x_p − pⁱ`.
pub fn collision_cost_gradient(x_p: &Vec2, humans: &[Vec2], params: &CostParams) -> Vec2 {
    collision_cost_and_gradient(x_p, humans, params).1
}

/// Value and position gradient in one pass over the humans.
#[inline]
pub(crate) fn collision_cost_and_gradient(
    x_p: &Vec2,
    humans: &[Vec2],
    params: &CostParams,
) -> (f64, Vec2) {
    let inv = 1.0 / (2.0 * params.lambda);
    let scale = -1.0 / params.lambda;
    let mut value = 0.0;
    let mut grad = Vec2::zeros();
    for p in humans {
        let d = x_p - p;
        let e = -d.norm_squared() * inv;
        if e <= EXPONENT_CUTOFF {
            continue;
        }
        let term = params.alpha * e.exp();
        value += term;
        grad += d * (scale * term);
    }
    (value, grad)
}

#[inline]
pub(crate) fn tracking_cost(x: &Vec4, r_t: &Vec4, q: &Matrix4<f64>) -> f64 {
    let e = x - r_t;
    0.5 * e.dot(&(q * e))
}

/// Tracking plus control-effort part of the running cost (no humans).
#[inline]
pub(crate) fn lq_cost(x: &Vec4, u: &Vec2, r_t: &Vec4, params: &CostParams) -> f64 {
    tracking_cost(x, r_t, &params.q) + 0.5 * params.r * u.dot(u)
}

#[inline]
fn pad_position(g: Vec2) -> Vec4 {
    Vec4::new(g.x, g.y, 0.0, 0.0)
}

/// Running cost from raw components; see [`running_cost`].
pub fn running_cost_at(
    x: &Vec4,
    humans: &[Vec2],
    u: &Vec2,
    r_t: &Vec4,
    params: &CostParams,
) -> f64 {
    lq_cost(x, u, r_t, params) + collision_cost(&Vec2::new(x[0], x[1]), humans, params)
}

/// `½(x−r)ᵀQ(x−r) + ½uᵀRu + c_col(s)`.
pub fn running_cost(s: &JointState, u: &Vec2, r_t: &Vec4, params: &CostParams) -> f64 {
    running_cost_at(&s.robot.to_vector(), &s.human_positions(), u, r_t, params)
}

pub fn terminal_cost_at(x: &Vec4, humans: &[Vec2], r_t: &Vec4, params: &CostParams) -> f64 {
    params.beta * tracking_cost(x, r_t, &params.q)
        + params.beta * collision_cost(&Vec2::new(x[0], x[1]), humans, params)
}

/// `β/2·(x−r)ᵀQ(x−r) + β·c_col(s)`.
pub fn terminal_cost(s: &JointState, r_t: &Vec4, params: &CostParams) -> f64 {
    terminal_cost_at(&s.robot.to_vector(), &s.human_positions(), r_t, params)
}

pub fn running_cost_state_gradient_at(
    x: &Vec4,
    humans: &[Vec2],
    r_t: &Vec4,
    params: &CostParams,
) -> Vec4 {
    let g = collision_cost_gradient(&Vec2::new(x[0], x[1]), humans, params);
    params.q * (x - r_t) + pad_position(g)
}

/// `∂c/∂x = Q(x−r) + (∇c_col, 0, 0)`; the control term does not depend on x.
pub fn running_cost_state_gradient(
    s: &JointState,
    _u: &Vec2,
    r_t: &Vec4,
    params: &CostParams,
) -> Vec4 {
    running_cost_state_gradient_at(&s.robot.to_vector(), &s.human_positions(), r_t, params)
}

pub fn terminal_cost_state_gradient_at(
    x: &Vec4,
    humans: &[Vec2],
    r_t: &Vec4,
    params: &CostParams,
) -> Vec4 {
    running_cost_state_gradient_at(x, humans, r_t, params) * params.beta
}

/// `∂h/∂x = β·(Q(x−r) + (∇c_col, 0, 0))`.
pub fn terminal_cost_state_gradient(s: &JointState, r_t: &Vec4, params: &CostParams) -> Vec4 {
    terminal_cost_state_gradient_at(&s.robot.to_vector(), &s.human_positions(), r_t, params)
}

/// Left-endpoint rectangle quadrature of the running cost on the
/// integration grid plus the terminal cost.
pub fn total_cost(
    traj: &JointTrajectory,
    u: &ControlSchedule,
    reference: &[Vec4],
    params: &CostParams,
) -> Result<f64> {
    let cells = u.len();
    if traj.len() != cells + 1 {
        return Err(Error::GridMismatch(format!(
            "trajectory has {} nodes, schedule has {} cells",
            traj.len(),
            cells
        )));
    }
    if reference.len() != traj.len() {
        return Err(Error::GridMismatch(format!(
            "reference has {} nodes, trajectory has {}",
            reference.len(),
            traj.len()
        )));
    }
    if (traj.dt_c - u.dt_c()).abs() > 1e-12 {
        return Err(Error::GridMismatch(
            "trajectory and schedule steps differ".into(),
        ));
    }
    let dt = u.dt_c();
    let mut acc = 0.0;
    for (k, r) in reference.iter().enumerate().take(cells) {
        let c = running_cost_at(
            &traj.robot[k],
            traj.humans.at_node(k),
            &u.input(k),
            r,
            params,
        );
        acc += dt * c;
    }
    Ok(acc
        + terminal_cost_at(
            &traj.robot[cells],
            traj.humans.at_node(cells),
            &reference[cells],
            params,
        ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rollout, HumanState, RobotState, TimeGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff<F: Fn(&Vec4) -> f64>(f: F, x: &Vec4, h: f64) -> Vec4 {
        let mut g = Vec4::zeros();
        for i in 0..4 {
            let mut xp = *x;
            let mut xm = *x;
            xp[i] += h;
            xm[i] -= h;
            g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &Vec4, b: &Vec4) -> f64 {
        (a - b).norm() / a.norm().max(b.norm()).max(1e-3)
    }

    #[test]
    fn collision_cost_examples() {
        let p = CostParams::default();
        let x = Vec2::new(1.0, 2.0);
        assert_eq!(collision_cost(&x, &[x], &p), 100.0);
        let far = x + Vec2::new(0.4f64.sqrt(), 0.0);
        // 100·e⁻¹
        assert!((collision_cost(&x, &[far], &p) - 36.787_944_117_144_23).abs() < 1e-9);
        assert_eq!(collision_cost(&x, &[], &p), 0.0);
    }

    #[test]
    fn collision_gradient_vanishes_on_top_of_a_human() {
        let p = CostParams::default();
        let x = Vec2::new(0.3, -0.7);
        assert_eq!(collision_cost_gradient(&x, &[x], &p), Vec2::zeros());
    }

    #[test]
    fn collision_gradient_matches_finite_differences_and_bound() {
        let p = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..5);
            let humans: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let x = Vec4::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                0.0,
                0.0,
            );
            let f = |y: &Vec4| collision_cost(&Vec2::new(y[0], y[1]), &humans, &p);
            let fd = central_diff(f, &x, 1e-6);
            let g = collision_cost_gradient(&Vec2::new(x[0], x[1]), &humans, &p);
            assert!(
                rel_err(&fd, &pad_position(g)) < 1e-6,
                "fd {fd:?} analytic {g:?}"
            );
            let bound = n as f64 * p.alpha * (1.0 / (p.lambda * std::f64::consts::E)).sqrt();
            assert!(g.norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn running_cost_examples() {
        let p = CostParams::default();
        let r = Vec4::new(1.0, 2.0, 0.5, 0.0);
        assert_eq!(running_cost_at(&r, &[], &Vec2::zeros(), &r, &p), 0.0);
        let x = r + Vec4::new(1.0, 0.0, 0.0, 0.0);
        assert!((running_cost_at(&x, &[], &Vec2::zeros(), &r, &p) - 0.25).abs() < 1e-15);
        assert!((running_cost_at(&r, &[], &Vec2::new(1.0, 1.0), &r, &p) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn terminal_cost_examples() {
        let p = CostParams::default();
        let r = Vec4::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(terminal_cost_at(&r, &[], &r, &p), 0.0);
        let x = r + Vec4::new(1.0, 0.0, 0.0, 0.0);
        assert!((terminal_cost_at(&x, &[], &r, &p) - 0.025).abs() < 1e-15);
        let zero_beta = CostParams { beta: 0.0, ..p };
        let human = [Vec2::new(0.1, 0.0)];
        assert_eq!(terminal_cost_at(&x, &human, &r, &zero_beta), 0.0);
    }

    #[test]
    fn state_gradients_match_finite_differences() {
        let p = CostParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let humans: Vec<Vec2> = (0..3)
                .map(|_| Vec2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let x = Vec4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let r = Vec4::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let u = Vec2::new(0.3, -0.1);
            let fd = central_diff(|y| running_cost_at(y, &humans, &u, &r, &p), &x, 1e-6);
            let g = running_cost_state_gradient_at(&x, &humans, &r, &p);
            assert!(rel_err(&fd, &g) < 1e-6);
            assert_eq!(g[2], 0.0);
            assert_eq!(g[3], 0.0);
            let fd = central_diff(|y| terminal_cost_at(y, &humans, &r, &p), &x, 1e-6);
            let g = terminal_cost_state_gradient_at(&x, &humans, &r, &p);
            assert!(rel_err(&fd, &g) < 1e-6);
        }
        let r = Vec4::new(1.0, 1.0, 0.0, 0.0);
        assert_eq!(
            running_cost_state_gradient_at(&r, &[], &r, &p),
            Vec4::zeros()
        );
    }

    #[test]
    fn params_validation() {
        assert!(CostParams::default().validate().is_ok());
        let mut q = Matrix4::zeros();
        q[(0, 1)] = 1.0;
        assert!(CostParams {
            q,
            ..Default::default()
        }
        .validate()
        .is_err());
        let q = Matrix4::from_diagonal(&Vec4::new(-1.0, 0.0, 0.0, 0.0));
        assert!(CostParams {
            q,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CostParams {
            r: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CostParams {
            lambda: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(CostParams {
            alpha: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn reference_line() {
        let r = ReferenceTrajectory::new(Vec2::zeros(), Vec2::new(3.0, 4.0), 1.0, 2.0).unwrap();
        assert_eq!(r.state_at(0.0), Vec4::zeros());
        let mid = r.state_at(4.5);
        assert!((mid - Vec4::new(1.5, 2.0, 0.6, 0.8)).norm() < 1e-12);
        assert_eq!(r.state_at(100.0), Vec4::new(3.0, 4.0, 0.0, 0.0));
        assert!(ReferenceTrajectory::new(Vec2::zeros(), Vec2::zeros(), 0.0, 0.0).is_err());
    }

    fn static_scene(humans: &[Vec2]) -> JointState {
        JointState {
            time: 0.0,
            robot: RobotState::at_rest(Vec2::zeros()),
            humans: humans
                .iter()
                .enumerate()
                .map(|(i, &position)| HumanState {
                    id: i as u32,
                    position,
                })
                .collect(),
        }
    }

    #[test]
    fn total_cost_quadrature() {
        let grid = TimeGrid::default();
        let p = CostParams::default();
        let s0 = static_scene(&[]);
        let u = ControlSchedule::zeros(0.0, grid.dt_c, grid.n_cells());
        let traj = rollout(&s0, &u, &[], &grid).unwrap();
        let at_rest = vec![Vec4::zeros(); grid.n_nodes()];
        assert_eq!(total_cost(&traj, &u, &at_rest, &p).unwrap(), 0.0);

        // constant offset: running cost 0.25 everywhere, no terminal term
        let offset = vec![Vec4::new(1.0, 0.0, 0.0, 0.0); grid.n_nodes()];
        let p0 = CostParams { beta: 0.0, ..p };
        let j = total_cost(&traj, &u, &offset, &p0).unwrap();
        assert!((j - 4.8 * 0.25).abs() < 1e-9);

        assert!(total_cost(&traj, &u, &offset[..10], &p0).is_err());
    }

    #[test]
    fn total_cost_converges_under_refinement() {
        // Same continuous problem on dt and dt/2: rectangle-rule error is O(dt).
        let p = CostParams::default();
        let human = [Vec2::new(1.0, 0.5)];
        let eval = |dt_c: f64| {
            let grid = TimeGrid::new(dt_c, 0.4, 12).unwrap();
            let s0 = static_scene(&human);
            let inputs = (0..grid.n_cells())
                .map(|k| {
                    let t = k as f64 * dt_c;
                    Vec2::new((0.7 * t).sin(), 0.3)
                })
                .collect();
            let u = ControlSchedule::new(0.0, dt_c, inputs, 5.0).unwrap();
            let traj = rollout(&s0, &u, &[Vec2::zeros(); 12], &grid).unwrap();
            let reference = ReferenceTrajectory::new(Vec2::zeros(), Vec2::new(5.0, 0.0), 1.0, 0.0)
                .unwrap()
                .sample(0.0, dt_c, grid.n_nodes());
            total_cost(&traj, &u, &reference, &p).unwrap()
        };
        let (a, b, c) = (eval(0.04), eval(0.02), eval(0.01));
        let ratio = (a - b) / (b - c);
        assert!((ratio - 2.0).abs() < 0.2, "refinement ratio {ratio}");
        assert!((b - c).abs() < 0.05 * c.abs());
    }
}
