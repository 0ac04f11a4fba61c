//! Training objectives for softmax policies with analytic gradients:
//! clipped policy gradient, DPO, SimPO, ORPO, KTO and advantage-weighted
//! likelihood, plus the closed-form advantage-tilted policy and a
//! finite-difference gradient checker.
//!
//! Gradients are laid out like the policy logits `[h][s][a]`. Pairwise and
//! per-example losses are averaged over the batch.

mod gradcheck;
mod ppo;
mod preference;
mod weighted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, SoftmaxPolicy};
use crate::scalar::Scalar;
use crate::trajectory::Step;

pub use gradcheck::{finite_diff_check, FiniteDiffReport};
pub use ppo::{per_step_advantage_for_ppo, ppo_clip, Baseline, PpoAdvantages};
pub use preference::{dpo, kto, orpo, simpo};
pub use weighted::{adv_weighted_sft, tilted_policy, WeightedTrajectory};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("buffer entry {index} was collected by snapshot {found:#018x}, expected {expected:#018x}")]
    SnapshotMismatch { index: usize, found: u64, expected: u64 },
    #[error("empty batch")]
    EmptyBatch,
    #[error("example {index} has no steps to score")]
    ZeroLength { index: usize },
    #[error("example {index}: length-normalized likelihood is 1, odds are undefined")]
    DegenerateLikelihood { index: usize },
    #[error("invalid objective parameter: {0}")]
    InvalidParams(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss is not finite at the evaluation point")]
    NonFinite,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Whether [`LossReport::value`] is to be minimized or maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    pub value: T,
    /// Gradient of `value` with respect to the logits.
    pub gradient: Vec<T>,
    /// Contribution of each example before averaging.
    pub per_example: Vec<T>,
    /// Steps whose clipped term was active (clipped objective only).
    pub clipped_steps: usize,
    pub sense: Sense,
}

impl<T: Scalar> LossReport<T> {
    /// Gradient pointing in the improving direction.
    pub fn ascent_direction(&self) -> Vec<T> {
        match self.sense {
            Sense::Maximize => self.gradient.clone(),
            Sense::Minimize => self.gradient.iter().map(|&g| -g).collect(),
        }
    }
}

/// Reference point of the KTO value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KtoRefPoint {
    Constant(f64),
    /// `max(0, mean log-ratio)` over the batch, held fixed for the gradient.
    BatchMeanKl,
}

/// Hyperparameters shared by the objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParams {
    pub clip_eps: f64,
    pub beta: f64,
    pub simpo_margin: f64,
    pub orpo_lambda: f64,
    pub kto_lambda_d: f64,
    pub kto_lambda_u: f64,
    pub kto_ref_point: KtoRefPoint,
}

impl Default for ObjectiveParams {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            beta: 0.1,
            simpo_margin: 0.5,
            orpo_lambda: 0.1,
            kto_lambda_d: 1.0,
            kto_lambda_u: 1.0,
            kto_ref_point: KtoRefPoint::BatchMeanKl,
        }
    }
}

impl ObjectiveParams {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let bad = |m: &str| Err(ObjectiveError::InvalidParams(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if !(self.simpo_margin >= 0.0 && self.simpo_margin.is_finite()) {
            return bad("simpo_margin must be non-negative");
        }
        for (name, v) in [
            ("orpo_lambda", self.orpo_lambda),
            ("kto_lambda_d", self.kto_lambda_d),
            ("kto_lambda_u", self.kto_lambda_u),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ObjectiveError::InvalidParams(format!("{name} must be positive")));
            }
        }
        if let KtoRefPoint::Constant(z) = self.kto_ref_point {
            if !z.is_finite() {
                return bad("kto_ref_point must be finite");
            }
        }
        Ok(())
    }
}

/// `log π(y)` summed over `steps`.
pub fn sequence_log_prob<T: Scalar>(policy: &SoftmaxPolicy<T>, steps: &[Step]) -> T {
    steps.iter().map(|s| policy.log_prob(s.h, s.state, s.action)).sum()
}

/// Adds `scale * ∇ log π(y)` over `steps` into `grad`.
pub(crate) fn accumulate_sequence_grad<T: Scalar>(policy: &SoftmaxPolicy<T>, steps: &[Step], scale: T, grad: &mut [T]) {
    for s in steps {
        policy.accumulate_log_prob_grad(s.h, s.state, s.action, scale, grad);
    }
}

pub(crate) fn check_same_shape<T: Scalar>(a: &SoftmaxPolicy<T>, b: &SoftmaxPolicy<T>) -> Result<(), ObjectiveError> {
    if a.horizon() != b.horizon() || a.num_states() != b.num_states() || a.num_actions() != b.num_actions() {
        return Err(ObjectiveError::Shape("policy and reference differ in shape".into()));
    }
    Ok(())
}

pub(crate) fn count<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("count fits")
}
