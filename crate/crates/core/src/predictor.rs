//! Human motion samplers.
//!
//! A predictor turns the recent observations of every human into `M` sampled
//! futures, each an `N × T` array of per-observation-step displacements. All
//! samplers sit behind [`MotionPredictor`], which also carries an optional
//! candidate robot trajectory so a robot-conditional model can be slotted in.
//! The samplers shipped here ignore it.

use nalgebra::Matrix2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::seeding::stream_rng;
use crate::{Error, Result, Vec2, Vec4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    ConstantVelocityGaussian,
    MultimodalMixture,
    Replay,
}

/// One heading mode of the mixture sampler: the mean velocity rotated by
/// `heading_offset` radians, chosen with probability `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureMode {
    pub weight: f64,
    pub heading_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Per-step displacement covariance, m².
    pub covariance: [[f64; 2]; 2],
    /// Observation interval the displacements refer to, seconds.
    pub dt_o: f64,
    pub modes: Vec<MixtureMode>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        let veer = 30f64.to_radians();
        Self {
            kind: PredictorKind::ConstantVelocityGaussian,
            covariance: [[0.01, 0.0], [0.0, 0.01]],
            dt_o: 0.4,
            modes: vec![
                MixtureMode {
                    weight: 0.6,
                    heading_offset: 0.0,
                },
                MixtureMode {
                    weight: 0.2,
                    heading_offset: veer,
                },
                MixtureMode {
                    weight: 0.2,
                    heading_offset: -veer,
                },
            ],
        }
    }
}

/// What the robot knows about one human when it plans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HumanObservation {
    pub id: u32,
    /// Positions at past observation instants, oldest first; the last entry
    /// is the current position.
    pub history: Vec<Vec2>,
    /// Known mean velocity; when absent it is estimated from the history.
    pub mean_velocity: Option<Vec2>,
    /// Recorded future positions at the next observation instants (replay).
    pub future: Option<Vec<Vec2>>,
}

impl HumanObservation {
    pub fn current(&self) -> Option<Vec2> {
        self.history.last().copied()
    }

    fn velocity(&self, dt_o: f64) -> Result<Vec2> {
        if let Some(v) = self.mean_velocity {
            return Ok(v);
        }
        estimate_velocity(&self.history, dt_o).ok_or(Error::InsufficientHistory {
            id: self.id,
            len: self.history.len(),
        })
    }
}

/// Finite-difference velocity of the last two observations.
pub fn estimate_velocity(history: &[Vec2], dt_o: f64) -> Option<Vec2> {
    match history {
        [.., prev, last] => Some((last - prev) / dt_o),
        _ => None,
    }
}

/// `M × N × T` sampled displacement futures.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanTransitionSamples {
    pub master_seed: u64,
    pub n_humans: usize,
    pub horizon: usize,
    /// `samples[j][i·T + k]` is the displacement of human `i` at jump `k+1`.
    pub samples: Vec<Vec<Vec2>>,
}

impl HumanTransitionSamples {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, j: usize) -> &[Vec2] {
        &self.samples[j]
    }

    pub fn displacement(&self, j: usize, i: usize, k: usize) -> Vec2 {
        self.samples[j][i * self.horizon + k]
    }

    /// `(master_seed, stream)` that reproduces sample `j`.
    pub fn sample_seed(&self, j: usize) -> (u64, u64) {
        (self.master_seed, j as u64)
    }
}

pub trait MotionPredictor: Send + Sync {
    /// Draws `m` futures of `horizon` jumps for every observed human. Sample
    /// `j` depends only on `(master_seed, j)`.
    fn sample(
        &self,
        humans: &[HumanObservation],
        m: usize,
        horizon: usize,
        master_seed: u64,
        conditioning: Option<&[Vec4]>,
    ) -> Result<HumanTransitionSamples>;

    /// True when samples depend on the candidate robot trajectory, in which
    /// case callers must resample per candidate.
    fn is_conditional(&self) -> bool {
        false
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        let s = Matrix2::new(
            self.covariance[0][0],
            self.covariance[0][1],
            self.covariance[1][0],
            self.covariance[1][1],
        );
        if s.iter().any(|v| !v.is_finite()) {
            return Err(invalid("covariance", "entries must be finite"));
        }
        if (s[(0, 1)] - s[(1, 0)]).abs() > 1e-12 {
            return Err(invalid("covariance", "must be symmetric"));
        }
        if s[(0, 0)] < 0.0 || s[(1, 1)] < 0.0 || s.determinant() < -1e-15 {
            return Err(invalid("covariance", "must be positive semidefinite"));
        }
        if !(self.dt_o.is_finite() && self.dt_o > 0.0) {
            return Err(invalid("dt_o", "must be positive"));
        }
        if self.kind == PredictorKind::MultimodalMixture {
            if self.modes.is_empty() {
                return Err(invalid("modes", "mixture needs at least one mode"));
            }
            if self
                .modes
                .iter()
                .any(|m| m.weight.is_nan() || m.weight < 0.0 || !m.heading_offset.is_finite())
            {
                return Err(invalid("modes", "weights must be nonnegative"));
            }
            let total: f64 = self.modes.iter().map(|m| m.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid("modes", format!("weights sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    /// Lower-triangular factor of the 2×2 PSD covariance.
    fn cholesky(&self) -> Matrix2<f64> {
        let [[a, b], [_, c]] = self.covariance;
        let l11 = a.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (c - l21 * l21).max(0.0).sqrt();
        Matrix2::new(l11, 0.0, l21, l22)
    }

    fn pick_mode<R: Rng>(&self, rng: &mut R) -> f64 {
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        for mode in &self.modes {
            acc += mode.weight;
            if draw < acc {
                return mode.heading_offset;
            }
        }
        self.modes.last().map_or(0.0, |m| m.heading_offset)
    }

    fn replay_displacements(
        &self,
        humans: &[HumanObservation],
        horizon: usize,
    ) -> Result<Vec<Vec2>> {
        let mut out = Vec::with_capacity(humans.len() * horizon);
        for h in humans {
            let current = h
                .current()
                .ok_or(Error::InsufficientHistory { id: h.id, len: 0 })?;
            let future = h.future.as_ref().ok_or(Error::MissingFuture(h.id))?;
            let mut prev = current;
            for k in 0..horizon {
                // hold static once the recording runs out
                let next = future.get(k).copied().unwrap_or(prev);
                out.push(next - prev);
                prev = next;
            }
        }
        Ok(out)
    }
}

impl MotionPredictor for PredictorConfig {
    fn sample(
        &self,
        humans: &[HumanObservation],
        m: usize,
        horizon: usize,
        master_seed: u64,
        _conditioning: Option<&[Vec4]>,
    ) -> Result<HumanTransitionSamples> {
        self.validate()?;
        let n = humans.len();
        let samples = match self.kind {
            PredictorKind::Replay => {
                let shared = self.replay_displacements(humans, horizon)?;
                vec![shared; m]
            }
            PredictorKind::ConstantVelocityGaussian | PredictorKind::MultimodalMixture => {
                let mut means = Vec::with_capacity(n);
                for h in humans {
                    if h.history.is_empty() {
                        return Err(Error::InsufficientHistory { id: h.id, len: 0 });
                    }
                    means.push(h.velocity(self.dt_o)? * self.dt_o);
                }
                let chol = self.cholesky();
                let mixture = self.kind == PredictorKind::MultimodalMixture;
                (0..m)
                    .map(|j| {
                        let mut rng = stream_rng(master_seed, j as u64);
                        let mut ys = Vec::with_capacity(n * horizon);
                        for mean in &means {
                            let mean = if mixture {
                                let angle = self.pick_mode(&mut rng);
                                nalgebra::Rotation2::new(angle) * mean
                            } else {
                                *mean
                            };
                            for _ in 0..horizon {
                                let z = Vec2::new(
                                    rng.sample(StandardNormal),
                                    rng.sample(StandardNormal),
                                );
                                ys.push(mean + chol * z);
                            }
                        }
                        ys
                    })
                    .collect()
            }
        };
        Ok(HumanTransitionSamples {
            master_seed,
            n_humans: n,
            horizon,
            samples,
        })
    }
}
