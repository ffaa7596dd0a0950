//! Closed-loop episode engine and its metrics.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::controllers::{Controller, PlanContext};
use super::scenario::{CrowdState, Scenario, ScenarioKind};
use crate::cost::ReferenceTrajectory;
use crate::dynamics::{euler_step, ControlSchedule, HumanState, JointState, RobotState};
use crate::seeding::{mix, stream_rng};
use crate::{Result, Vec2};

/// Robot and human positions at one integration node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub time: f64,
    pub robot: RobotState,
    pub control: Vec2,
    pub humans: Vec<HumanState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub controller: String,
    pub seed: u64,
    pub goal: Vec2,
    /// Smallest robot–human distance over the episode; `None` without humans.
    pub min_distance: Option<f64>,
    pub normalized_goal_distance: f64,
    pub collided: bool,
    /// Only defined for the intersection scenario.
    pub yielded: Option<bool>,
    /// Controller wall time of every planning call, seconds.
    pub cycle_times: Vec<f64>,
    /// Set when the controller returned an error; metrics cover the
    /// episode up to that point.
    pub failed: Option<String>,
    pub log: Vec<LogEntry>,
}

/// Equality ignores wall times, which are measurements rather than
/// outcomes.
impl PartialEq for EpisodeResult {
    fn eq(&self, other: &Self) -> bool {
        self.controller == other.controller
            && self.seed == other.seed
            && self.goal == other.goal
            && self.min_distance == other.min_distance
            && self.normalized_goal_distance == other.normalized_goal_distance
            && self.collided == other.collided
            && self.yielded == other.yielded
            && self.cycle_times.len() == other.cycle_times.len()
            && self.failed == other.failed
            && self.log == other.log
    }
}

/// Seed of the ground-truth human noise of an episode.
const HUMAN_STREAM: u64 = 0x68756d616e;
/// Seed of the controller's Monte Carlo draws of an episode.
const PLANNER_STREAM: u64 = 0x706c616e;

/// Simulates `scenario` under `controller`.
///
/// The plant is integrated on the `dt_c` grid; humans jump every `dt_o` on
/// the absolute clock; the controller is called every
/// `controller.replan_cells()` steps, after the reference is re-anchored at
/// the robot if it strayed more than `replan_distance` from it.
pub fn run_episode(
    scenario: &Scenario,
    controller: &dyn Controller,
    seed: u64,
) -> Result<EpisodeResult> {
    scenario.validate()?;
    let grid = scenario.grid;
    let ratio = grid.ratio();
    let replan = controller.replan_cells().max(1);
    let total = scenario.duration_cells();

    let mut crowd = CrowdState::new(scenario);
    let mut human_rng = stream_rng(mix(seed, HUMAN_STREAM), 0);
    let planner_seed = mix(seed, PLANNER_STREAM);

    let mut robot = scenario.robot;
    let start = robot.position;
    let initial_goal_distance = (start - scenario.goal).norm();
    let mut reference =
        ReferenceTrajectory::new(start, scenario.goal, scenario.reference_speed, 0.0)?;
    let mut schedule = ControlSchedule::zeros(0.0, grid.dt_c, grid.n_cells());
    let mut schedule_start = 0usize;

    let mut log = Vec::with_capacity(total + 1);
    let mut cycle_times = Vec::new();
    let mut failed = None;
    let mut min_distance: Option<f64> = None;
    let mut jumps = 0usize;

    for cell in 0..=total {
        let time = cell as f64 * grid.dt_c;
        if cell > 0 && cell % ratio == 0 {
            jumps += 1;
            crowd.jump(jumps, grid.dt_o, &mut |_, cov| {
                let z = Vec2::new(
                    human_rng.sample(StandardNormal),
                    human_rng.sample(StandardNormal),
                );
                gaussian_step(cov, &z)
            });
        }
        let positions = crowd.positions();
        let humans: Vec<HumanState> = crowd
            .observations()
            .iter()
            .zip(&positions)
            .map(|(o, p)| HumanState {
                id: o.id,
                position: *p,
            })
            .collect();
        for p in &positions {
            let d = (robot.position - p).norm();
            min_distance = Some(min_distance.map_or(d, |m| m.min(d)));
        }

        if cell < total && cell % replan == 0 {
            let r_now = reference.state_at(time);
            if (robot.position - Vec2::new(r_now[0], r_now[1])).norm() > scenario.replan_distance {
                reference = ReferenceTrajectory::new(
                    robot.position,
                    scenario.goal,
                    scenario.reference_speed,
                    time,
                )?;
            }
            let state = JointState {
                time,
                robot,
                humans: humans.clone(),
            };
            let ctx = PlanContext {
                state: &state,
                humans: crowd.observations(),
                reference: &reference,
                previous: &schedule,
                predictor: &scenario.predictor,
                seed: mix(planner_seed, cell as u64),
            };
            let clock = Instant::now();
            let planned = controller.plan(&ctx);
            cycle_times.push(clock.elapsed().as_secs_f64());
            match planned {
                Ok(u) => {
                    schedule = u;
                    schedule_start = cell;
                }
                Err(e) => {
                    failed = Some(e.to_string());
                }
            }
        }

        let control = if cell < total && failed.is_none() {
            schedule
                .inputs()
                .get(cell - schedule_start)
                .copied()
                .unwrap_or_else(Vec2::zeros)
        } else {
            Vec2::zeros()
        };
        log.push(LogEntry {
            time,
            robot,
            control,
            humans,
        });
        if failed.is_some() || cell == total {
            break;
        }
        robot = euler_step(&robot, &control, grid.dt_c)?;
    }

    let collided = min_distance.is_some_and(|d| d < scenario.collision_threshold);
    let final_distance = (robot.position - scenario.goal).norm();
    let normalized_goal_distance = if initial_goal_distance > 0.0 {
        final_distance / initial_goal_distance
    } else {
        0.0
    };
    let yielded = (scenario.kind == ScenarioKind::Intersection)
        .then(|| yielded(&log, start, scenario.goal, crowd.goals()));
    Ok(EpisodeResult {
        controller: controller.name().to_string(),
        seed,
        goal: scenario.goal,
        min_distance,
        normalized_goal_distance,
        collided,
        yielded,
        cycle_times,
        failed,
        log,
    })
}

/// `L·z` for the lower Cholesky factor `L` of a 2×2 covariance.
fn gaussian_step(cov: &[[f64; 2]; 2], z: &Vec2) -> Vec2 {
    let l11 = cov[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { cov[1][0] / l11 } else { 0.0 };
    let l22 = (cov[1][1] - l21 * l21).max(0.0).sqrt();
    Vec2::new(l11 * z.x, l21 * z.x + l22 * z.y)
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Fraction `s ∈ [0, 1]` along the move `p → q` at which it crosses the
/// segment `a–b`, if it does.
pub(crate) fn crossing_fraction(p: &Vec2, q: &Vec2, a: &Vec2, b: &Vec2) -> Option<f64> {
    let r = q - p;
    let s = b - a;
    let denom = cross(&r, &s);
    if denom == 0.0 {
        return None;
    }
    let t = cross(&(a - p), &s) / denom;
    let u = cross(&(a - p), &r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

/// First time (in fractional log steps) a path crosses segment `a–b`.
pub(crate) fn first_crossing(path: &[Vec2], a: &Vec2, b: &Vec2) -> Option<f64> {
    path.windows(2)
        .enumerate()
        .find_map(|(k, w)| crossing_fraction(&w[0], &w[1], a, b).map(|s| k as f64 + s))
}

/// The robot yields when a human crosses the robot's start–goal segment
/// strictly before the robot crosses that human's start–goal segment.
fn yielded(log: &[LogEntry], start: Vec2, goal: Vec2, human_goals: &[Option<Vec2>]) -> bool {
    let robot_path: Vec<Vec2> = log.iter().map(|e| e.robot.position).collect();
    human_goals.iter().enumerate().any(|(i, human_goal)| {
        let Some(human_goal) = human_goal else {
            return false;
        };
        let path: Vec<Vec2> = log.iter().map(|e| e.humans[i].position).collect();
        let human_cross = first_crossing(&path, &start, &goal);
        let robot_cross = first_crossing(&robot_path, &path[0], human_goal);
        match (human_cross, robot_cross) {
            (Some(h), Some(r)) => h < r,
            (Some(_), None) => true,
            _ => false,
        }
    })
}
