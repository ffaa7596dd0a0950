//! Risk-sensitive sequential action control (RSSAC) for robot navigation
//! among stochastically moving humans.
//!
//! The controller perturbs a nominal open-loop control schedule to descend the
//! mode insertion gradient of the entropic risk of the trajectory cost, where
//! the expectation is taken over Monte Carlo samples of human motion. Around it
//! sit a hybrid robot/human dynamics model, the cost functional, human motion
//! samplers, a pedestrian dataset reader and a closed-loop simulator with
//! baseline controllers.
//!
//! Module map:
//!
//! - [`dynamics`]: double-integrator robot, jump-transition humans, rollouts.
//! - [`cost`]: tracking + collision cost, its state gradients, quadrature.
//! - [`predictor`]: samplers for human displacement futures.
//! - [`risk`]: entropic risk and the softmax weighting of samples.
//! - [`controller`]: adjoints, mode insertion gradient, the RSSAC step.
//! - [`datasets`]: pedestrian trajectory files and scene windows.
//! - [`sim`]: scenarios, closed-loop episodes, baselines, benchmarks.

pub mod controller;
pub mod cost;
pub mod datasets;
pub mod dynamics;
mod error;
pub mod predictor;
pub mod risk;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};

/// Planar vector (positions, velocities, accelerations).
pub type Vec2 = nalgebra::Vector2<f64>;
/// Robot state `(p_x, p_y, v_x, v_y)`.
pub type Vec4 = nalgebra::Vector4<f64>;
