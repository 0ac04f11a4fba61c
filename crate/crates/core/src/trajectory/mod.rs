//! Trajectory and preference records, the text-trace segmenter, and
//! line-delimited persistence.

mod records;
mod segment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use records::{from_jsonl, read_records, to_jsonl, write_records, Record};
pub use segment::{
    join_steps, segment_text, SegmentParams, SegmentedTrace, DEFAULT_MIN_WORDS, MAX_STEPS_OFFLINE, MAX_STEPS_ONLINE,
};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid preference pair: {0}")]
    InvalidPair(String),
    #[error("invalid KTO example: {0}")]
    InvalidKto(String),
    #[error("invalid segmentation parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One `(h, s_h, a_h)` step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub h: usize,
    pub state: usize,
    pub action: usize,
}

/// How a trajectory came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Origin {
    Fresh,
    /// Prefix through `reset_index` kept, remainder resampled.
    ResetContinuation {
        reset_index: usize,
    },
    /// Preferred member of a pair; `reset_index` is `None` for
    /// whole-trajectory pairs.
    Positive {
        reset_index: Option<usize>,
    },
    Negative {
        reset_index: Option<usize>,
    },
}

impl Origin {
    pub fn reset_index(self) -> Option<usize> {
        match self {
            Origin::Fresh => None,
            Origin::ResetContinuation { reset_index } => Some(reset_index),
            Origin::Positive { reset_index } | Origin::Negative { reset_index } => reset_index,
        }
    }
}

/// A complete episode. `terminal_reward` is the episode return; with
/// terminal-only rewards it is the final reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct Trajectory<T> {
    pub question_id: u64,
    pub steps: Vec<Step>,
    pub terminal_reward: T,
    /// Seed of the stream that generated the sampled part (the whole episode
    /// for fresh trajectories, the continuation otherwise).
    pub seed: u64,
    pub origin: Origin,
}

impl<T: Scalar> Trajectory<T> {
    #[inline]
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Structural checks; pass `r_max` to also bound the reward.
    pub fn validate(&self, r_max: Option<T>) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::InvalidTrajectory(m));
        if self.steps.is_empty() {
            return bad("no steps".into());
        }
        if let Some(j) = self.steps.iter().enumerate().position(|(j, s)| s.h != j) {
            return bad(format!("step indices not contiguous at position {j}"));
        }
        if !(self.terminal_reward.is_finite() && self.terminal_reward >= T::zero()) {
            return bad(format!(
                "terminal reward {} is negative or not finite",
                self.terminal_reward
            ));
        }
        if let Some(r) = r_max {
            if self.terminal_reward > r {
                return bad(format!("terminal reward {} exceeds r_max {r}", self.terminal_reward));
            }
        }
        if let Some(m) = self.origin.reset_index() {
            if m >= self.steps.len() {
                return bad(format!("reset index {m} beyond {} steps", self.steps.len()));
            }
        }
        Ok(())
    }
}

/// Where a pair's reset point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Reset at the selected critical step.
    Gpo,
    /// Reset at a uniformly drawn step.
    RandomReset,
    /// Two independent full trajectories, no shared reset.
    WholeTrajectory,
}

/// `(x, y⁺, y⁻)` with `y⁺` and `y⁻` agreeing on their first
/// `shared_prefix_len` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct PreferencePair<T> {
    pub question_id: u64,
    pub positive: Trajectory<T>,
    pub negative: Trajectory<T>,
    /// Reset step `m`; `None` for whole-trajectory pairs.
    pub critical_index: Option<usize>,
    pub shared_prefix_len: usize,
    pub source: PairSource,
}

impl<T: Scalar> PreferencePair<T> {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        let bad = |m: String| Err(TrajectoryError::InvalidPair(m));
        self.positive.validate(None)?;
        self.negative.validate(None)?;
        if self.positive.question_id != self.question_id || self.negative.question_id != self.question_id {
            return bad("member trajectories belong to a different question".into());
        }
        if self.positive.terminal_reward <= self.negative.terminal_reward {
            return bad(format!(
                "positive reward {} does not exceed negative reward {}",
                self.positive.terminal_reward, self.negative.terminal_reward
            ));
        }
        match (self.critical_index, self.source) {
            (None, PairSource::WholeTrajectory) => {
                if self.shared_prefix_len != 0 {
                    return bad("whole-trajectory pairs declare no shared prefix".into());
                }
            }
            (Some(m), PairSource::Gpo | PairSource::RandomReset) => {
                if self.shared_prefix_len != m + 1 {
                    return bad(format!(
                        "shared_prefix_len {} != critical_index + 1 = {}",
                        self.shared_prefix_len,
                        m + 1
                    ));
                }
                let n = self.shared_prefix_len;
                if self.positive.len() < n || self.negative.len() < n {
                    return bad("shared prefix longer than a member trajectory".into());
                }
                if self.positive.steps[..n] != self.negative.steps[..n] {
                    return bad(format!("members differ within the first {n} steps"));
                }
            }
            (m, s) => return bad(format!("critical_index {m:?} inconsistent with source {s:?}")),
        }
        Ok(())
    }
}

/// A single trajectory tagged desirable or undesirable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct KtoExample<T> {
    pub question_id: u64,
    pub trajectory: Trajectory<T>,
    pub desirable: bool,
}

impl<T: Scalar> KtoExample<T> {
    pub fn validate(&self) -> Result<(), TrajectoryError> {
        self.trajectory.validate(None)?;
        if self.trajectory.question_id != self.question_id {
            return Err(TrajectoryError::InvalidKto(
                "trajectory belongs to a different question".into(),
            ));
        }
        let succeeded = self.trajectory.terminal_reward > T::zero();
        if succeeded != self.desirable {
            return Err(TrajectoryError::InvalidKto(format!(
                "desirable={} but reward is {}",
                self.desirable, self.trajectory.terminal_reward
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn traj(steps: &[(usize, usize)], reward: f64, origin: Origin) -> Trajectory<f64> {
        Trajectory {
            question_id: 1,
            steps: steps
                .iter()
                .enumerate()
                .map(|(h, &(state, action))| Step { h, state, action })
                .collect(),
            terminal_reward: reward,
            seed: 0,
            origin,
        }
    }

    #[test]
    fn trajectory_validation() {
        let t = traj(&[(0, 1), (0, 0)], 1.0, Origin::Fresh);
        assert!(t.validate(Some(1.0)).is_ok());
        assert!(t.validate(Some(0.5)).is_err());
        let mut gap = t.clone();
        gap.steps[1].h = 2;
        assert!(gap.validate(None).is_err());
        let far = traj(&[(0, 1)], 0.0, Origin::ResetContinuation { reset_index: 3 });
        assert!(far.validate(None).is_err());
    }

    #[test]
    fn pair_requires_shared_prefix() {
        let pos = traj(
            &[(0, 1), (0, 0), (0, 0)],
            1.0,
            Origin::Positive { reset_index: Some(1) },
        );
        let neg = traj(
            &[(0, 1), (0, 0), (1, 2)],
            0.0,
            Origin::Negative { reset_index: Some(1) },
        );
        let mut pair = PreferencePair {
            question_id: 1,
            positive: pos,
            negative: neg,
            critical_index: Some(1),
            shared_prefix_len: 2,
            source: PairSource::Gpo,
        };
        assert!(pair.validate().is_ok());
        pair.negative.steps[1].action = 2;
        assert!(pair.validate().is_err());
        pair.negative.steps[1].action = 0;
        pair.shared_prefix_len = 3;
        assert!(pair.validate().is_err());
        pair.shared_prefix_len = 2;
        std::mem::swap(&mut pair.positive, &mut pair.negative);
        assert!(pair.validate().is_err());
    }

    #[test]
    fn kto_tag_matches_reward() {
        let ex = KtoExample {
            question_id: 1,
            trajectory: traj(&[(0, 0)], 0.0, Origin::Fresh),
            desirable: true,
        };
        assert!(ex.validate().is_err());
        let ok = KtoExample { desirable: false, ..ex };
        assert!(ok.validate().is_ok());
    }
}
