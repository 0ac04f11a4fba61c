//! Monte-Carlo Q estimates along a trajectory, per-step advantage profiles,
//! critical-step selection and tabular Q regression.
//!
//! `Q̂_i` is the value of the completed trajectory that keeps steps `0..=i`
//! and resamples everything after: the prefix reward plus a fresh
//! continuation after `(s_i, a_i)`. Advantages difference consecutive
//! estimates, `Â_i = Q̂_i − Q̂_{i−1}`, with `Â_0 = Q̂_0 − v̂_0` where `v̂_0`
//! is the value of the prompt itself.

mod fit;
mod select;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{rollout_after, rollout_from, MdpError, OracleValues, PolicyTag, SoftmaxPolicy, TabularMdp};
use crate::rng::{Purpose, SeedPath, Stream};
use crate::scalar::Scalar;
use crate::trajectory::Trajectory;

pub use fit::{collect_q_dataset, fit_q_table, fit_v_table, QSample, QTable, VSample, VTable};
pub use select::{select_critical, select_index, Gamma, SelectionMode};

/// Profiles whose advantages all lie within this distance of each other
/// carry no reset signal.
pub const FLAT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AdvantageError {
    #[error("step index {index} out of range for a trajectory of {len} steps")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("advantage {index} is NaN")]
    NaN { index: usize },
    #[error("empty advantage profile")]
    Empty,
    #[error("invalid gamma: {0}")]
    InvalidGamma(String),
    #[error("oracle values were not computed for the acting policy")]
    OracleMismatch,
    #[error("inconsistent profile: {0}")]
    Inconsistent(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Estimate of `Q̂_i` for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct QEstimate<T> {
    pub step_index: usize,
    pub mean: T,
    /// Number of returns averaged; exact estimates report 1.
    pub n_samples: usize,
    /// Unbiased sample variance of the returns (0 for a single sample).
    pub sample_variance: T,
}

/// How `Q̂` values are obtained.
#[derive(Debug, Clone, Copy)]
pub enum AdvantageMode<'a, T> {
    /// Average of `n_samples` sampled continuations per step.
    MonteCarlo { n_samples: usize },
    /// Expectations read off exact oracle values of the acting policy.
    Exact(&'a OracleValues<T>),
}

/// Per-step estimates and advantages of one trajectory, plus the chosen
/// critical step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct AdvantageProfile<T> {
    pub question_id: u64,
    pub q_hats: Vec<QEstimate<T>>,
    pub advantages: Vec<T>,
    pub v0_hat: T,
    pub critical_index: usize,
    pub gamma: Gamma,
    pub selection_mode: SelectionMode,
    /// All advantages equal within [`FLAT_TOLERANCE`].
    pub flat: bool,
}

impl<T: Scalar> AdvantageProfile<T> {
    /// Builds a profile from per-step estimates, differencing them into
    /// advantages. The critical index starts at the earliest argmax.
    pub fn from_estimates(question_id: u64, q_hats: Vec<QEstimate<T>>, v0_hat: T) -> Result<Self, AdvantageError> {
        if q_hats.is_empty() {
            return Err(AdvantageError::Empty);
        }
        let advantages = differences(&q_hats, v0_hat);
        let critical_index = select::argmax_earliest(&advantages)?;
        let flat = is_flat(&advantages);
        Ok(Self {
            question_id,
            q_hats,
            advantages,
            v0_hat,
            critical_index,
            gamma: Gamma::Infinite,
            selection_mode: SelectionMode::Argmax,
            flat,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.advantages.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.advantages.is_empty()
    }

    /// Re-selects the critical index and records how it was chosen.
    pub fn reselect(&mut self, mode: SelectionMode, gamma: Gamma, rng: &mut Stream) -> Result<usize, AdvantageError> {
        let m = match mode {
            SelectionMode::Argmax => select::argmax_earliest(&self.advantages)?,
            SelectionMode::SoftmaxSample => select_index(&self.advantages, gamma, rng)?,
            SelectionMode::RandomReset => rng.below(self.advantages.len()),
        };
        self.critical_index = m;
        self.selection_mode = mode;
        self.gamma = match mode {
            SelectionMode::Argmax => Gamma::Infinite,
            _ => gamma,
        };
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), AdvantageError> {
        let bad = |m: String| Err(AdvantageError::Inconsistent(m));
        if self.q_hats.is_empty() {
            return Err(AdvantageError::Empty);
        }
        if self.advantages.len() != self.q_hats.len() {
            return bad("advantages and estimates differ in length".into());
        }
        for (i, q) in self.q_hats.iter().enumerate() {
            if q.step_index != i {
                return bad(format!("estimate {i} has step index {}", q.step_index));
            }
            if q.n_samples == 0 || !(q.mean.is_finite() && q.mean >= T::zero()) {
                return bad(format!("estimate {i} is malformed"));
            }
        }
        if differences(&self.q_hats, self.v0_hat) != self.advantages {
            return bad("advantages are not consecutive differences of the estimates".into());
        }
        if self.critical_index >= self.len() {
            return bad(format!("critical index {} out of range", self.critical_index));
        }
        Ok(())
    }

    /// `Σ_{i≥1} Â_i`, summed left to right.
    pub fn telescoped_sum(&self) -> T {
        self.advantages.iter().skip(1).copied().sum()
    }
}

fn differences<T: Scalar>(q_hats: &[QEstimate<T>], v0_hat: T) -> Vec<T> {
    let mut prev = v0_hat;
    q_hats
        .iter()
        .map(|q| {
            let a = q.mean - prev;
            prev = q.mean;
            a
        })
        .collect()
}

fn is_flat<T: Scalar>(advantages: &[T]) -> bool {
    let tol = T::lit(FLAT_TOLERANCE);
    let lo = advantages.iter().copied().fold(T::infinity(), T::min);
    let hi = advantages.iter().copied().fold(T::neg_infinity(), T::max);
    hi - lo <= tol
}

/// Sum of rewards collected strictly before step `i`.
fn prefix_reward<T: Scalar>(mdp: &TabularMdp<T>, traj: &Trajectory<T>, i: usize) -> T {
    traj.steps[..i]
        .iter()
        .map(|st| mdp.reward(st.h, st.state, st.action))
        .sum()
}

fn mean_and_variance<T: Scalar>(xs: &[T]) -> (T, T) {
    let n = T::from_usize(xs.len()).expect("count fits");
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let ss: T = xs.iter().map(|&x| (x - mean) * (x - mean)).sum();
    (mean, ss / (n - T::one()))
}

/// Seed of the `k`-th continuation sampled after step `i`.
#[inline]
pub fn continuation_seed(seed: u64, i: usize, k: usize) -> u64 {
    SeedPath::new(seed)
        .purpose(Purpose::QEstimate)
        .child(i as u64)
        .child(k as u64)
        .seed()
}

/// Monte-Carlo estimate of `Q̂_i` from `n_samples` completed trajectories
/// that share the trajectory's first `i + 1` steps. At the last step there
/// is nothing to resample, so the trajectory's own return is reported with
/// `n_samples = 1`.
pub fn mc_q_estimate<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    traj: &Trajectory<T>,
    i: usize,
    n_samples: usize,
    seed: u64,
) -> Result<QEstimate<T>, AdvantageError> {
    if i >= traj.len() {
        return Err(AdvantageError::IndexOutOfRange {
            index: i,
            len: traj.len(),
        });
    }
    if n_samples == 0 {
        return Err(AdvantageError::NoSamples);
    }
    let prefix = prefix_reward(mdp, traj, i);
    let st = traj.steps[i];
    if i + 1 == mdp.horizon() {
        return Ok(QEstimate {
            step_index: i,
            mean: prefix + mdp.reward(st.h, st.state, st.action),
            n_samples: 1,
            sample_variance: T::zero(),
        });
    }
    let returns = (0..n_samples)
        .map(|k| {
            let c = rollout_after(mdp, policy, st.h, st.state, st.action, continuation_seed(seed, i, k))?;
            Ok(prefix + c.return_to_go)
        })
        .collect::<Result<Vec<T>, MdpError>>()?;
    let (mean, sample_variance) = mean_and_variance(&returns);
    Ok(QEstimate {
        step_index: i,
        mean,
        n_samples,
        sample_variance,
    })
}

/// Monte-Carlo estimate of the prompt value from fresh rollouts at the
/// trajectory's start state.
pub fn mc_prompt_value<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    start_state: usize,
    n_samples: usize,
    seed: u64,
) -> Result<T, AdvantageError> {
    if n_samples == 0 {
        return Err(AdvantageError::NoSamples);
    }
    let root = SeedPath::new(seed).purpose(Purpose::PromptValue);
    let returns = (0..n_samples)
        .map(|k| Ok(rollout_from(mdp, policy, start_state, 0, root.child(k as u64).seed())?.return_to_go))
        .collect::<Result<Vec<T>, MdpError>>()?;
    Ok(mean_and_variance(&returns).0)
}

/// Estimates every `Q̂_i`, the prompt value and the differenced advantages.
/// The critical index is the earliest argmax; use
/// [`AdvantageProfile::reselect`] for other selection rules.
pub fn advantage_profile<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    traj: &Trajectory<T>,
    mode: AdvantageMode<'_, T>,
    seed: u64,
) -> Result<AdvantageProfile<T>, AdvantageError> {
    if traj.is_empty() {
        return Err(AdvantageError::Empty);
    }
    let start = traj.steps[0].state;
    let (q_hats, v0_hat) = match mode {
        AdvantageMode::MonteCarlo { n_samples } => {
            let q = (0..traj.len())
                .map(|i| mc_q_estimate(mdp, policy, traj, i, n_samples, seed))
                .collect::<Result<Vec<_>, _>>()?;
            (q, mc_prompt_value(mdp, policy, start, n_samples, seed)?)
        }
        AdvantageMode::Exact(oracle) => {
            if oracle.tag()
                != (PolicyTag::Policy {
                    fingerprint: policy.fingerprint(),
                })
            {
                return Err(AdvantageError::OracleMismatch);
            }
            let mut prefix = T::zero();
            let q = traj
                .steps
                .iter()
                .enumerate()
                .map(|(i, st)| {
                    let est = QEstimate {
                        step_index: i,
                        mean: prefix + oracle.q(st.h, st.state, st.action),
                        n_samples: 1,
                        sample_variance: T::zero(),
                    };
                    prefix += mdp.reward(st.h, st.state, st.action);
                    est
                })
                .collect();
            (q, oracle.v(0, start))
        }
    };
    AdvantageProfile::from_estimates(traj.question_id, q_hats, v0_hat)
}

/// Exact `Q_h(s,a) − V_h(s)` for the policy the oracle describes.
pub fn state_advantage<T: Scalar>(oracle: &OracleValues<T>, h: usize, s: usize, a: usize) -> Result<T, AdvantageError> {
    Ok(oracle.state_advantage(h, s, a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{backward_induction, pivotal_chain, sample_trajectory, PIVOTAL_CORRECT_ACTION};
    use crate::trajectory::{Origin, Step};

    fn forced(h_len: usize, actions: &[usize], states: &[usize]) -> Trajectory<f64> {
        Trajectory {
            question_id: 0,
            steps: (0..h_len)
                .map(|h| Step {
                    h,
                    state: states[h],
                    action: actions[h],
                })
                .collect(),
            terminal_reward: 0.0,
            seed: 0,
            origin: Origin::Fresh,
        }
    }

    #[test]
    fn exact_profile_peaks_at_pivot() {
        let m = pivotal_chain::<f64>(8, 4, 2, 0.2).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        let o = backward_induction(&m, &pol).unwrap();
        let mut actions = vec![1; 8];
        actions[2] = PIVOTAL_CORRECT_ACTION;
        let t = forced(8, &actions, &[0; 8]);
        let p = advantage_profile(&m, &pol, &t, AdvantageMode::Exact(&o), 0).unwrap();
        assert!((p.advantages[2] - 0.6).abs() < 1e-15);
        assert_eq!(p.critical_index, 2);
        assert!(!p.flat);
        p.validate().unwrap();
    }

    #[test]
    fn certain_success_gives_flat_profile() {
        let m = pivotal_chain::<f64>(5, 3, 1, 0.0).unwrap();
        let pol = SoftmaxPolicy::deterministic(5, 2, 3, |_, _| 0);
        let t = sample_trajectory(&m, &pol, 3);
        let p = advantage_profile(&m, &pol, &t, AdvantageMode::MonteCarlo { n_samples: 4 }, 9).unwrap();
        assert!(p.advantages.iter().all(|&a| a == 0.0));
        assert!(p.flat);
        assert_eq!(p.critical_index, 0);
    }

    #[test]
    fn last_step_estimate_is_own_return() {
        let m = pivotal_chain::<f64>(4, 2, 1, 0.5).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        for seed in 0..20 {
            let t = sample_trajectory(&m, &pol, seed);
            let q = mc_q_estimate(&m, &pol, &t, 3, 16, seed).unwrap();
            assert_eq!(q.mean, t.terminal_reward);
            assert_eq!(q.n_samples, 1);
        }
        let t = sample_trajectory(&m, &pol, 0);
        assert!(mc_q_estimate(&m, &pol, &t, 4, 1, 0).is_err());
        assert!(mc_q_estimate(&m, &pol, &t, 0, 0, 0).is_err());
    }

    #[test]
    fn telescoping_with_dyadic_estimates() {
        let m = pivotal_chain::<f64>(8, 4, 3, 0.2).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        for seed in 0..50 {
            let t = sample_trajectory(&m, &pol, seed);
            let p = advantage_profile(&m, &pol, &t, AdvantageMode::MonteCarlo { n_samples: 8 }, seed).unwrap();
            assert_eq!(p.telescoped_sum(), p.q_hats[7].mean - p.q_hats[0].mean);
        }
    }

    #[test]
    fn oracle_for_another_policy_rejected() {
        let m = pivotal_chain::<f64>(3, 2, 1, 0.2).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        let other = SoftmaxPolicy::deterministic(3, 2, 2, |_, _| 1);
        let o = backward_induction(&m, &other).unwrap();
        let t = sample_trajectory(&m, &pol, 0);
        assert!(matches!(
            advantage_profile(&m, &pol, &t, AdvantageMode::Exact(&o), 0),
            Err(AdvantageError::OracleMismatch)
        ));
    }

    #[test]
    fn tampered_profile_fails_validation() {
        let m = pivotal_chain::<f64>(4, 2, 1, 0.2).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        let t = sample_trajectory(&m, &pol, 1);
        let mut p = advantage_profile(&m, &pol, &t, AdvantageMode::MonteCarlo { n_samples: 2 }, 1).unwrap();
        p.advantages[1] += 0.25;
        assert!(p.validate().is_err());
    }
}
