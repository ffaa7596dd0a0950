//! Scenario library: who is in the scene, how they move, and what the
//! robot is asked to do.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::datasets::{scene_window, TrajectoryDataset};
use crate::dynamics::{RobotState, TimeGrid};
use crate::error::invalid;
use crate::predictor::{HumanObservation, PredictorConfig, PredictorKind};
use crate::{Error, Result, Vec2};

pub const COLLISION_THRESHOLD: f64 = 0.40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Intersection,
    StaticField,
    DatasetReplay,
}

/// Ground-truth motion of a simulated human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanMotion {
    Static,
    /// Jumps by `mean_velocity·dt_o + w` at every observation instant,
    /// `w ~ N(0, covariance)`.
    Gaussian {
        mean_velocity: Vec2,
        covariance: [[f64; 2]; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanAgent {
    pub id: u32,
    pub start: Vec2,
    /// Destination used by the yield metric.
    pub goal: Option<Vec2>,
    pub motion: HumanMotion,
    /// Whether the planner is told the mean velocity.
    pub velocity_known: bool,
}

/// Where the humans come from.
#[derive(Debug, Clone)]
pub enum Crowd {
    Agents(Vec<HumanAgent>),
    /// Recorded pedestrians replayed frame by frame from `start_frame`.
    Replay {
        dataset: Arc<TrajectoryDataset>,
        start_frame: i64,
        history_len: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub robot: RobotState,
    pub goal: Vec2,
    pub crowd: Crowd,
    pub predictor: PredictorConfig,
    /// Episode length, seconds.
    pub duration: f64,
    pub collision_threshold: f64,
    /// Cruise speed of the straight-line reference.
    pub reference_speed: f64,
    /// Distance from the reference that triggers replanning it.
    pub replan_distance: f64,
    pub grid: TimeGrid,
}

/// Tunable geometry of the two-agent crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionParams {
    pub robot_start: Vec2,
    pub robot_velocity: Vec2,
    pub robot_goal: Vec2,
    pub human_start: Vec2,
    pub human_goal: Vec2,
    pub human_velocity: Vec2,
    /// Per-jump displacement covariance of the human.
    pub human_covariance: [[f64; 2]; 2],
    pub duration: f64,
    pub reference_speed: f64,
}

impl Default for IntersectionParams {
    fn default() -> Self {
        Self {
            robot_start: Vec2::new(0.0, -5.0),
            robot_velocity: Vec2::new(0.0, 1.0),
            robot_goal: Vec2::new(0.0, 5.0),
            human_start: Vec2::new(-5.0, 0.0),
            human_goal: Vec2::new(5.0, 0.0),
            human_velocity: Vec2::new(1.0, 0.0),
            human_covariance: [[0.25, 0.0], [0.0, 0.01]],
            duration: 14.0,
            reference_speed: 1.0,
        }
    }
}

/// Robot driving north across the path of one human walking east at a
/// known mean velocity with Gaussian step noise.
pub fn intersection_scenario(params: &IntersectionParams) -> Result<Scenario> {
    let scenario = Scenario {
        kind: ScenarioKind::Intersection,
        robot: RobotState::new(params.robot_start, params.robot_velocity),
        goal: params.robot_goal,
        crowd: Crowd::Agents(vec![HumanAgent {
            id: 0,
            start: params.human_start,
            goal: Some(params.human_goal),
            motion: HumanMotion::Gaussian {
                mean_velocity: params.human_velocity,
                covariance: params.human_covariance,
            },
            velocity_known: true,
        }]),
        predictor: PredictorConfig {
            kind: PredictorKind::ConstantVelocityGaussian,
            covariance: params.human_covariance,
            ..PredictorConfig::default()
        },
        duration: params.duration,
        collision_threshold: COLLISION_THRESHOLD,
        reference_speed: params.reference_speed,
        replan_distance: 2.0,
        grid: TimeGrid::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// `n` motionless humans scattered with a fixed lattice-like pattern around
/// the straight path from `(0, −7)` to `(0, 7)`, none closer than 1 m to it.
pub fn static_field_scenario(n: usize) -> Result<Scenario> {
    let humans = (0..n)
        .map(|i| {
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let row = (i / 2) as f64;
            let x = side * (1.0 + (row * 0.618_033_988_75).fract() * 5.0);
            let y = -6.0 + (row * 0.381_966_011_25 * 12.0) % 12.0;
            HumanAgent {
                id: i as u32,
                start: Vec2::new(x, y),
                goal: None,
                motion: HumanMotion::Static,
                velocity_known: false,
            }
        })
        .collect();
    static_field_from(humans, Vec2::new(0.0, -7.0), Vec2::new(0.0, 7.0), 14.0)
}

/// Static humans at explicit positions.
pub fn static_field_from(
    humans: Vec<HumanAgent>,
    start: Vec2,
    goal: Vec2,
    duration: f64,
) -> Result<Scenario> {
    let scenario = Scenario {
        kind: ScenarioKind::StaticField,
        robot: RobotState::at_rest(start),
        goal,
        crowd: Crowd::Agents(humans),
        predictor: PredictorConfig::default(),
        duration,
        collision_threshold: COLLISION_THRESHOLD,
        reference_speed: 1.0,
        replan_distance: 2.0,
        grid: TimeGrid::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

/// A robot crossing a recorded crowd, starting at `start_frame`.
pub fn dataset_replay_scenario(
    dataset: Arc<TrajectoryDataset>,
    start_frame: i64,
    robot_start: Vec2,
    goal: Vec2,
    duration: f64,
    predictor: PredictorConfig,
) -> Result<Scenario> {
    let scenario = Scenario {
        kind: ScenarioKind::DatasetReplay,
        robot: RobotState::at_rest(robot_start),
        goal,
        crowd: Crowd::Replay {
            dataset,
            start_frame,
            history_len: 8,
        },
        predictor,
        duration,
        collision_threshold: COLLISION_THRESHOLD,
        reference_speed: 1.0,
        replan_distance: 2.0,
        grid: TimeGrid::default(),
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.predictor.validate()?;
        if !self.robot.is_finite() || !(self.goal.x.is_finite() && self.goal.y.is_finite()) {
            return Err(Error::NonFinite("scenario robot state or goal"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be positive"));
        }
        self.grid.cells("duration", self.duration)?;
        if !(self.reference_speed.is_finite() && self.reference_speed > 0.0) {
            return Err(invalid("reference_speed", "must be positive"));
        }
        if self.collision_threshold.is_nan() || self.collision_threshold < 0.0 {
            return Err(invalid("collision_threshold", "must be nonnegative"));
        }
        if let Crowd::Agents(agents) = &self.crowd {
            for a in agents {
                if let HumanMotion::Gaussian { covariance, .. } = &a.motion {
                    PredictorConfig {
                        covariance: *covariance,
                        ..PredictorConfig::default()
                    }
                    .validate()?;
                }
            }
            let start = self.robot.position;
            if agents
                .iter()
                .any(|a| (a.start - start).norm() < self.collision_threshold)
            {
                return Err(invalid(
                    "humans",
                    "a human starts in collision with the robot",
                ));
            }
        }
        Ok(())
    }

    /// Copy with a different robot goal.
    pub fn with_goal(&self, goal: Vec2) -> Self {
        Self {
            goal,
            ..self.clone()
        }
    }

    pub fn duration_cells(&self) -> usize {
        (self.duration / self.grid.dt_c).round() as usize
    }
}

/// Ground-truth human state during an episode.
pub(crate) struct CrowdState {
    observations: Vec<HumanObservation>,
    goals: Vec<Option<Vec2>>,
    motions: Vec<HumanMotion>,
    replay: Option<(Arc<TrajectoryDataset>, i64, usize, usize)>,
}

impl CrowdState {
    pub(crate) fn new(scenario: &Scenario) -> Self {
        let dt_o = scenario.grid.dt_o;
        match &scenario.crowd {
            Crowd::Agents(agents) => {
                let observations = agents
                    .iter()
                    .map(|a| {
                        let (history, mean_velocity) = match &a.motion {
                            HumanMotion::Static => (vec![a.start, a.start], None),
                            HumanMotion::Gaussian { mean_velocity, .. } => (
                                vec![a.start - mean_velocity * dt_o, a.start],
                                a.velocity_known.then_some(*mean_velocity),
                            ),
                        };
                        let future = (a.motion == HumanMotion::Static)
                            .then(|| vec![a.start; scenario.grid.horizon_steps]);
                        HumanObservation {
                            id: a.id,
                            history,
                            mean_velocity,
                            future,
                        }
                    })
                    .collect();
                Self {
                    observations,
                    goals: agents.iter().map(|a| a.goal).collect(),
                    motions: agents.iter().map(|a| a.motion.clone()).collect(),
                    replay: None,
                }
            }
            Crowd::Replay {
                dataset,
                start_frame,
                history_len,
            } => {
                let mut state = Self {
                    observations: vec![],
                    goals: vec![],
                    motions: vec![],
                    replay: Some((
                        dataset.clone(),
                        *start_frame,
                        *history_len,
                        scenario.grid.horizon_steps,
                    )),
                };
                state.load_frame(0);
                state
            }
        }
    }

    fn load_frame(&mut self, jump: usize) {
        if let Some((ds, start, history, future)) = &self.replay {
            self.observations = scene_window(ds, start + jump as i64, *history, *future);
            self.goals = vec![None; self.observations.len()];
        }
    }

    /// Advances every human by one observation interval.
    pub(crate) fn jump(
        &mut self,
        jump: usize,
        dt_o: f64,
        noise: &mut impl FnMut(usize, &[[f64; 2]; 2]) -> Vec2,
    ) {
        if self.replay.is_some() {
            self.load_frame(jump);
            return;
        }
        for (i, (obs, motion)) in self.observations.iter_mut().zip(&self.motions).enumerate() {
            let current = *obs.history.last().expect("histories are never empty");
            let next = match motion {
                HumanMotion::Static => current,
                HumanMotion::Gaussian {
                    mean_velocity,
                    covariance,
                } => current + mean_velocity * dt_o + noise(i, covariance),
            };
            obs.history.push(next);
            if obs.history.len() > 8 {
                obs.history.remove(0);
            }
        }
    }

    pub(crate) fn observations(&self) -> &[HumanObservation] {
        &self.observations
    }

    pub(crate) fn positions(&self) -> Vec<Vec2> {
        self.observations
            .iter()
            .map(|o| *o.history.last().expect("histories are never empty"))
            .collect()
    }

    pub(crate) fn goals(&self) -> &[Option<Vec2>] {
        &self.goals
    }
}
