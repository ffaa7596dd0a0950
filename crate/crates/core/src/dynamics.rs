//! Joint robot/human hybrid dynamics.
//!
//! The robot is a continuous-time control-affine system `ẋ = f(x) + H(x)u`,
//! here a planar double integrator integrated with explicit Euler on the
//! control grid. Humans are position-only agents whose positions jump by a
//! displacement `y` at each observation instant and are held constant in
//! between.

use nalgebra::Matrix4x2;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result, Vec2, Vec4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl RobotState {
    pub fn new(position: Vec2, velocity: Vec2) -> Self {
        Self { position, velocity }
    }

    pub fn at_rest(position: Vec2) -> Self {
        Self::new(position, Vec2::zeros())
    }

    pub fn from_vector(x: &Vec4) -> Self {
        Self::new(Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]))
    }

    pub fn to_vector(&self) -> Vec4 {
        Vec4::new(
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.position
            .iter()
            .chain(self.velocity.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanState {
    pub id: u32,
    pub position: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub time: f64,
    pub robot: RobotState,
    pub humans: Vec<HumanState>,
}

impl JointState {
    pub fn human_positions(&self) -> Vec<Vec2> {
        self.humans.iter().map(|h| h.position).collect()
    }
}

/// Integration and observation grid of one planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeGrid {
    /// Robot integration step, seconds.
    pub dt_c: f64,
    /// Human observation interval, seconds.
    pub dt_o: f64,
    /// Horizon length in observation steps.
    pub horizon_steps: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            dt_c: 0.02,
            dt_o: 0.4,
            horizon_steps: 12,
        }
    }
}

/// Converts a duration to a whole number of `step`s, failing when it is not
/// an integer multiple.
pub(crate) fn whole_steps(field: &'static str, duration: f64, step: f64) -> Result<usize> {
    if !(duration.is_finite() && step.is_finite() && step > 0.0 && duration >= 0.0) {
        return Err(invalid(
            field,
            format!("{duration} is not a valid multiple of {step}"),
        ));
    }
    let ratio = duration / step;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(invalid(
            field,
            format!("{duration} is not an integer multiple of {step}"),
        ));
    }
    Ok(rounded as usize)
}

impl TimeGrid {
    pub fn new(dt_c: f64, dt_o: f64, horizon_steps: usize) -> Result<Self> {
        let grid = Self {
            dt_c,
            dt_o,
            horizon_steps,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt_c.is_finite() && self.dt_c > 0.0) {
            return Err(invalid("dt_c", "must be positive and finite"));
        }
        if !(self.dt_o.is_finite() && self.dt_o > 0.0) {
            return Err(invalid("dt_o", "must be positive and finite"));
        }
        if self.horizon_steps == 0 {
            return Err(invalid("horizon_steps", "must be at least 1"));
        }
        let ratio = whole_steps("dt_o", self.dt_o, self.dt_c)?;
        if ratio == 0 {
            return Err(invalid("dt_o", "must be at least dt_c"));
        }
        Ok(())
    }

    /// Integration cells per observation interval.
    pub fn ratio(&self) -> usize {
        (self.dt_o / self.dt_c).round() as usize
    }

    pub fn n_cells(&self) -> usize {
        self.horizon_steps * self.ratio()
    }

    /// Grid nodes including both endpoints.
    pub fn n_nodes(&self) -> usize {
        self.n_cells() + 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_cells() as f64 * self.dt_c
    }

    /// Whole number of integration cells in `seconds`.
    pub fn cells(&self, field: &'static str, seconds: f64) -> Result<usize> {
        whole_steps(field, seconds, self.dt_c)
    }

    /// Node index (relative to a horizon starting at `t0`) of the first human
    /// jump. Observation instants sit on the absolute clock at multiples of
    /// `dt_o`; a horizon starting exactly on one sees its first jump a full
    /// interval later.
    pub fn first_jump_cell(&self, t0: f64) -> usize {
        let ratio = self.ratio() as i64;
        let cell = (t0 / self.dt_c).round() as i64;
        let phase = cell.rem_euclid(ratio);
        (ratio - phase) as usize
    }

    /// Number of human jumps that have happened at or before `node`.
    pub fn jumps_by_node(&self, node: usize, first_jump_cell: usize) -> usize {
        if node < first_jump_cell {
            0
        } else {
            (1 + (node - first_jump_cell) / self.ratio()).min(self.horizon_steps)
        }
    }
}

/// Piecewise-constant control on the integration grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    t0: f64,
    dt_c: f64,
    inputs: Vec<Vec2>,
}

impl ControlSchedule {
    /// Builds a schedule, rejecting non-finite inputs and any input outside
    /// the control disk of radius `u_max`.
    pub fn new(t0: f64, dt_c: f64, inputs: Vec<Vec2>, u_max: f64) -> Result<Self> {
        if !(t0.is_finite() && dt_c.is_finite() && dt_c > 0.0) {
            return Err(Error::NonFinite("control schedule grid"));
        }
        for (index, u) in inputs.iter().enumerate() {
            if !(u.x.is_finite() && u.y.is_finite()) {
                return Err(Error::NonFinite("control schedule input"));
            }
            let norm = u.norm();
            if norm > u_max * (1.0 + 1e-12) {
                return Err(Error::ControlLimit { index, norm, u_max });
            }
        }
        Ok(Self { t0, dt_c, inputs })
    }

    pub fn zeros(t0: f64, dt_c: f64, cells: usize) -> Self {
        Self {
            t0,
            dt_c,
            inputs: vec![Vec2::zeros(); cells],
        }
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt_c(&self) -> f64 {
        self.dt_c
    }

    pub fn inputs(&self) -> &[Vec2] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.inputs.len() as f64 * self.dt_c
    }

    pub fn input(&self, cell: usize) -> Vec2 {
        self.inputs[cell]
    }

    /// Input in effect at absolute time `t`, clamped to the schedule range.
    pub fn input_at(&self, t: f64) -> Vec2 {
        if self.inputs.is_empty() {
            return Vec2::zeros();
        }
        let cell = ((t - self.t0) / self.dt_c + 1e-9).floor();
        let cell = cell.clamp(0.0, (self.inputs.len() - 1) as f64) as usize;
        self.inputs[cell]
    }

    pub fn max_norm(&self) -> f64 {
        self.inputs.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    /// Drops the first `cells` inputs, re-anchors at `t0 + cells·dt_c` and
    /// pads the tail with zeros so the length is preserved.
    pub fn shifted(&self, cells: usize) -> Self {
        let n = self.inputs.len();
        let mut inputs: Vec<Vec2> = self.inputs.iter().skip(cells).copied().collect();
        inputs.resize(n, Vec2::zeros());
        Self {
            t0: self.t0 + cells as f64 * self.dt_c,
            dt_c: self.dt_c,
            inputs,
        }
    }

    /// Copy with cells `range` set to `value`.
    pub fn with_constant(&self, range: std::ops::Range<usize>, value: Vec2) -> Self {
        let mut out = self.clone();
        let end = range.end.min(out.inputs.len());
        for u in &mut out.inputs[range.start.min(end)..end] {
            *u = value;
        }
        out
    }

    pub(crate) fn inputs_mut(&mut self) -> &mut [Vec2] {
        &mut self.inputs
    }
}

/// Drift term `f(x)`; for the double integrator `(v, 0)`.
pub fn drift(x: &Vec4) -> Vec4 {
    Vec4::new(x[2], x[3], 0.0, 0.0)
}

/// Input matrix `H(x)`; constant `[0; I]` for the double integrator.
pub fn input_matrix(_x: &Vec4) -> Matrix4x2<f64> {
    Matrix4x2::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
}

/// `H(x)ᵀ a`, the velocity block of `a` (`H` is state independent here).
#[inline]
pub(crate) fn input_matrix_transpose_mul(_x: &Vec4, a: &Vec4) -> Vec2 {
    Vec2::new(a[2], a[3])
}

/// One explicit Euler step without input validation. Position advances with
/// the pre-step velocity.
#[inline]
pub(crate) fn euler_step_unchecked(x: &Vec4, u: &Vec2, dt: f64) -> Vec4 {
    Vec4::new(
        x[0] + dt * x[2],
        x[1] + dt * x[3],
        x[2] + dt * u.x,
        x[3] + dt * u.y,
    )
}

/// `x' = x + dt·(f(x) + H(x)u)`.
pub fn euler_step(x: &RobotState, u: &Vec2, dt: f64) -> Result<RobotState> {
    if !x.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    if !(u.x.is_finite() && u.y.is_finite()) {
        return Err(Error::NonFinite("control input"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    let next = euler_step_unchecked(&x.to_vector(), u, dt);
    Ok(RobotState::from_vector(&next))
}

/// Jumps every human by its displacement and moves the clock to `t_k`.
pub fn apply_human_transitions(s: &JointState, y: &[Vec2], t_k: f64) -> Result<JointState> {
    if y.len() != s.humans.len() {
        return Err(Error::DimensionMismatch {
            context: "human transitions",
            expected: s.humans.len(),
            actual: y.len(),
        });
    }
    if y.iter().any(|d| !(d.x.is_finite() && d.y.is_finite())) {
        return Err(Error::NonFinite("human displacement"));
    }
    let humans = s
        .humans
        .iter()
        .zip(y)
        .map(|(h, d)| HumanState {
            id: h.id,
            position: h.position + d,
        })
        .collect();
    Ok(JointState {
        time: t_k,
        robot: s.robot,
        humans,
    })
}

/// Robot states on every node of the schedule's grid.
pub fn robot_rollout(x0: &RobotState, u: &ControlSchedule) -> Vec<Vec4> {
    let mut states = Vec::with_capacity(u.len() + 1);
    states.push(x0.to_vector());
    robot_rollout_into(&mut states, u.inputs(), u.dt_c());
    states
}

/// Extends `states` (whose last element is the node matching the first of
/// `inputs`) through `inputs`.
pub(crate) fn robot_rollout_into(states: &mut Vec<Vec4>, inputs: &[Vec2], dt: f64) {
    let mut x = *states.last().expect("rollout needs an initial state");
    for u in inputs {
        x = euler_step_unchecked(&x, u, dt);
        states.push(x);
    }
}

/// Human positions over one horizon for a single sampled future.
///
/// Positions are stored per observation segment: segment 0 holds the
/// initial positions and segment `k` the positions after the `k`-th jump.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanPath {
    n_humans: usize,
    segments: Vec<Vec2>,
    first_jump_cell: usize,
    ratio: usize,
    horizon_steps: usize,
}

impl HumanPath {
    /// `displacements` is human-major: entry `i·T + k` is `y^i_{k+1}`.
    pub fn new(
        initial: &[Vec2],
        displacements: &[Vec2],
        grid: &TimeGrid,
        first_jump_cell: usize,
    ) -> Result<Self> {
        let n = initial.len();
        let t = grid.horizon_steps;
        if displacements.len() != n * t {
            return Err(Error::DimensionMismatch {
                context: "human displacement sample",
                expected: n * t,
                actual: displacements.len(),
            });
        }
        let mut segments = Vec::with_capacity((t + 1) * n);
        segments.extend_from_slice(initial);
        for k in 0..t {
            for i in 0..n {
                let prev = segments[k * n + i];
                segments.push(prev + displacements[i * t + k]);
            }
        }
        Ok(Self {
            n_humans: n,
            segments,
            first_jump_cell,
            ratio: grid.ratio(),
            horizon_steps: t,
        })
    }

    /// Humans frozen at `positions` for the whole horizon.
    pub fn stationary(positions: &[Vec2], grid: &TimeGrid) -> Self {
        let zeros = vec![Vec2::zeros(); positions.len() * grid.horizon_steps];
        Self::new(positions, &zeros, grid, grid.ratio()).expect("shapes agree by construction")
    }

    pub fn n_humans(&self) -> usize {
        self.n_humans
    }

    pub fn segment(&self, k: usize) -> &[Vec2] {
        &self.segments[k * self.n_humans..(k + 1) * self.n_humans]
    }

    /// Positions in effect at grid node `node` (post-jump at jump nodes).
    #[inline]
    pub fn at_node(&self, node: usize) -> &[Vec2] {
        let k = if node < self.first_jump_cell {
            0
        } else {
            (1 + (node - self.first_jump_cell) / self.ratio).min(self.horizon_steps)
        };
        self.segment(k)
    }
}

/// Joint trajectory on the full integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrajectory {
    pub t0: f64,
    pub dt_c: f64,
    pub robot: Vec<Vec4>,
    pub human_ids: Vec<u32>,
    pub humans: HumanPath,
}

impl JointTrajectory {
    pub fn len(&self) -> usize {
        self.robot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robot.is_empty()
    }

    pub fn state(&self, node: usize) -> JointState {
        JointState {
            time: self.t0 + node as f64 * self.dt_c,
            robot: RobotState::from_vector(&self.robot[node]),
            humans: self
                .human_ids
                .iter()
                .zip(self.humans.at_node(node))
                .map(|(&id, &position)| HumanState { id, position })
                .collect(),
        }
    }

    pub fn states(&self) -> Vec<JointState> {
        (0..self.len()).map(|n| self.state(n)).collect()
    }
}

/// Forward-simulates the joint dynamics over one horizon: the robot with
/// Euler steps of `dt_c`, the humans with jumps every `dt_o`.
pub fn rollout(
    s0: &JointState,
    u: &ControlSchedule,
    y_sample: &[Vec2],
    grid: &TimeGrid,
) -> Result<JointTrajectory> {
    grid.validate()?;
    if u.len() != grid.n_cells() {
        return Err(Error::GridMismatch(format!(
            "schedule has {} cells, horizon needs {}",
            u.len(),
            grid.n_cells()
        )));
    }
    if (u.dt_c() - grid.dt_c).abs() > 1e-12 {
        return Err(Error::GridMismatch(format!(
            "schedule step {} differs from grid step {}",
            u.dt_c(),
            grid.dt_c
        )));
    }
    if !s0.robot.is_finite() {
        return Err(Error::NonFinite("robot state"));
    }
    let initial = s0.human_positions();
    let humans = HumanPath::new(&initial, y_sample, grid, grid.first_jump_cell(u.t0()))?;
    Ok(JointTrajectory {
        t0: u.t0(),
        dt_c: grid.dt_c,
        robot: robot_rollout(&s0.robot, u),
        human_ids: s0.humans.iter().map(|h| h.id).collect(),
        humans,
    })
}
