//! Finite-horizon episodic MDPs, softmax policies and exact dynamic-programming
//! oracles.
//!
//! Tables are stored flat and indexed by step first: transitions are
//! `[h][s][a][s']`, rewards `[h][s][a]`. Steps run `0..horizon`; the terminal
//! value `V_H` is identically zero.

mod envs;
mod oracle;
mod policy;
mod sample;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use envs::{bandit, pivotal_chain, random_mdp, RandomMdpSpec, PIVOTAL_CORRECT_ACTION};
pub use oracle::{backward_induction, compute_occupancy, optimal_values, OccupancyTable, OracleValues, PolicyTag};
pub use policy::{SoftmaxPolicy, DETERMINISTIC_LOGIT_GAP};
pub use sample::{
    replay_return, rollout_after, rollout_from, sample_next_state, sample_trajectory, sample_trajectory_from,
    Continuation,
};

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("transition row (h={h}, s={s}, a={a}) is not a probability row: {detail}")]
    TransitionRow {
        h: usize,
        s: usize,
        a: usize,
        detail: String,
    },
    #[error("reward r_{h}({s},{a}) = {value} outside [0, r_max={r_max}]")]
    RewardOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        value: f64,
        r_max: f64,
    },
    #[error("terminal-reward environment has nonzero reward at h={h} (s={s}, a={a})")]
    NonTerminalReward { h: usize, s: usize, a: usize },
    #[error("initial distribution is not a probability row: {0}")]
    InitialDistribution(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("step index {h} out of range for horizon {horizon}")]
    StepOutOfRange { h: usize, horizon: usize },
    #[error("state {state} out of range for {num_states} states")]
    StateOutOfRange { state: usize, num_states: usize },
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed environment document: {0}")]
    Json(#[from] serde_json::Error),
}

/// Finite-horizon episodic MDP `(S, A, {P_h}, {r_h}, H, d_0)` with rewards
/// bounded in `[0, r_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument<T>", into = "MdpDocument<T>", bound = "T: Scalar")]
pub struct TabularMdp<T> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transitions: Vec<T>,
    rewards: Vec<T>,
    initial_dist: Vec<T>,
    r_max: T,
    terminal_reward: bool,
    /// Point-mass rows resolved once: `Some(s')` when `P_h(.|s,a)` is a
    /// point mass on `s'`.
    next_state: Vec<Option<usize>>,
}

/// On-disk form of [`TabularMdp`] (`*.mdp.json`): nested arrays indexed
/// `transitions[h][s][a][s']`, `rewards[h][s][a]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct MdpDocument<T> {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub transitions: Vec<Vec<Vec<Vec<T>>>>,
    pub rewards: Vec<Vec<Vec<T>>>,
    pub initial_dist: Vec<T>,
    pub r_max: T,
    #[serde(default)]
    pub terminal_reward: bool,
}

impl<T: Scalar> TryFrom<MdpDocument<T>> for TabularMdp<T> {
    type Error = MdpError;

    fn try_from(doc: MdpDocument<T>) -> Result<Self, MdpError> {
        let (ns, na, hz) = (doc.num_states, doc.num_actions, doc.horizon);
        let shape_err = |what: &str| MdpError::Dimension(format!("{what} does not match (H={hz}, S={ns}, A={na})"));
        if doc.transitions.len() != hz || doc.rewards.len() != hz {
            return Err(shape_err("outer table length"));
        }
        let mut transitions = Vec::with_capacity(hz * ns * na * ns);
        for per_h in &doc.transitions {
            if per_h.len() != ns {
                return Err(shape_err("transitions[h]"));
            }
            for per_s in per_h {
                if per_s.len() != na {
                    return Err(shape_err("transitions[h][s]"));
                }
                for row in per_s {
                    if row.len() != ns {
                        return Err(shape_err("transitions[h][s][a]"));
                    }
                    transitions.extend_from_slice(row);
                }
            }
        }
        let mut rewards = Vec::with_capacity(hz * ns * na);
        for per_h in &doc.rewards {
            if per_h.len() != ns {
                return Err(shape_err("rewards[h]"));
            }
            for per_s in per_h {
                if per_s.len() != na {
                    return Err(shape_err("rewards[h][s]"));
                }
                rewards.extend_from_slice(per_s);
            }
        }
        TabularMdp::new(
            ns,
            na,
            hz,
            transitions,
            rewards,
            doc.initial_dist,
            doc.r_max,
            doc.terminal_reward,
        )
    }
}

impl<T: Scalar> From<TabularMdp<T>> for MdpDocument<T> {
    fn from(m: TabularMdp<T>) -> Self {
        let (ns, na, hz) = (m.num_states, m.num_actions, m.horizon);
        let transitions = (0..hz)
            .map(|h| {
                (0..ns)
                    .map(|s| (0..na).map(|a| m.transition_row(h, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        let rewards = (0..hz)
            .map(|h| (0..ns).map(|s| (0..na).map(|a| m.reward(h, s, a)).collect()).collect())
            .collect();
        MdpDocument {
            num_states: ns,
            num_actions: na,
            horizon: hz,
            transitions,
            rewards,
            initial_dist: m.initial_dist,
            r_max: m.r_max,
            terminal_reward: m.terminal_reward,
        }
    }
}

fn check_probability_row<T: Scalar>(row: &[T]) -> Result<(), String> {
    let mut sum = T::zero();
    for (i, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            return Err(format!("entry {i} is not finite"));
        }
        if p < T::zero() {
            return Err(format!("entry {i} is negative ({p})"));
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::row_tolerance() {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds and validates an MDP from flat tables (see module docs for the
    /// layout).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<T>,
        rewards: Vec<T>,
        initial_dist: Vec<T>,
        r_max: T,
        terminal_reward: bool,
    ) -> Result<Self, MdpError> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(MdpError::InvalidParameter(
                "num_states, num_actions and horizon must be positive".into(),
            ));
        }
        let (ns, na, hz) = (num_states, num_actions, horizon);
        if transitions.len() != hz * ns * na * ns {
            return Err(MdpError::Dimension(format!(
                "transition table has {} entries, expected {}",
                transitions.len(),
                hz * ns * na * ns
            )));
        }
        if rewards.len() != hz * ns * na {
            return Err(MdpError::Dimension(format!(
                "reward table has {} entries, expected {}",
                rewards.len(),
                hz * ns * na
            )));
        }
        if initial_dist.len() != ns {
            return Err(MdpError::Dimension(format!(
                "initial distribution has {} entries, expected {ns}",
                initial_dist.len()
            )));
        }
        if !(r_max.is_finite() && r_max > T::zero()) {
            return Err(MdpError::InvalidParameter(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        check_probability_row(&initial_dist).map_err(MdpError::InitialDistribution)?;

        let mut next_state = Vec::with_capacity(hz * ns * na);
        for h in 0..hz {
            for s in 0..ns {
                for a in 0..na {
                    let base = ((h * ns + s) * na + a) * ns;
                    let row = &transitions[base..base + ns];
                    check_probability_row(row).map_err(|detail| MdpError::TransitionRow { h, s, a, detail })?;
                    next_state.push(row.iter().position(|&p| p == T::one()));

                    let r = rewards[(h * ns + s) * na + a];
                    if !(r.is_finite() && r >= T::zero() && r <= r_max) {
                        return Err(MdpError::RewardOutOfRange {
                            h,
                            s,
                            a,
                            value: r.as_f64(),
                            r_max: r_max.as_f64(),
                        });
                    }
                    if terminal_reward && h + 1 < hz && r != T::zero() {
                        return Err(MdpError::NonTerminalReward { h, s, a });
                    }
                }
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transitions,
            rewards,
            initial_dist,
            r_max,
            terminal_reward,
            next_state,
        })
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn r_max(&self) -> T {
        self.r_max
    }

    #[inline]
    pub fn initial_dist(&self) -> &[T] {
        &self.initial_dist
    }

    /// Whether rewards are confined to the last step.
    #[inline]
    pub fn is_terminal_reward(&self) -> bool {
        self.terminal_reward
    }

    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[T] {
        let ns = self.num_states;
        let base = ((h * ns + s) * self.num_actions + a) * ns;
        &self.transitions[base..base + ns]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> T {
        self.rewards[(h * self.num_states + s) * self.num_actions + a]
    }

    /// `Some(s')` when the transition from `(h, s, a)` is deterministic.
    #[inline]
    pub fn deterministic_next(&self, h: usize, s: usize, a: usize) -> Option<usize> {
        self.next_state[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn is_deterministic(&self) -> bool {
        self.next_state.iter().all(Option::is_some)
    }

    /// Terminal-reward environment whose last-step rewards are all `0` or
    /// `r_max`.
    pub fn is_binary_terminal(&self) -> bool {
        if !self.terminal_reward {
            return false;
        }
        let h = self.horizon - 1;
        (0..self.num_states).all(|s| {
            (0..self.num_actions).all(|a| {
                let r = self.reward(h, s, a);
                r == T::zero() || r == self.r_max
            })
        })
    }

    /// An episode counts as solved when its return reaches `r_max`.
    #[inline]
    pub fn is_success(&self, episode_return: T) -> bool {
        episode_return >= self.r_max - T::row_tolerance()
    }

    pub(crate) fn check_step(&self, h: usize) -> Result<(), MdpError> {
        if h >= self.horizon {
            return Err(MdpError::StepOutOfRange {
                h,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    pub(crate) fn check_state(&self, s: usize) -> Result<(), MdpError> {
        if s >= self.num_states {
            return Err(MdpError::StateOutOfRange {
                state: s,
                num_states: self.num_states,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, MdpError> {
        let text = std::fs::read_to_string(path).map_err(|source| MdpError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Writes the `.mdp.json` document atomically.
    pub fn save(&self, path: &Path) -> Result<(), MdpError> {
        crate::io::write_atomic(path, self.to_json().as_bytes()).map_err(|source| MdpError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
