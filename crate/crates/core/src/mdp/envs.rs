//! Synthetic environments: the pivotal chain, one-step bandits and random
//! MDPs for property tests.

use super::{MdpError, TabularMdp};
use crate::rng::Stream;
use crate::scalar::Scalar;

/// The action that keeps the pivotal chain on track at the pivotal step.
pub const PIVOTAL_CORRECT_ACTION: usize = 0;

const ON_TRACK: usize = 0;
const DEAD: usize = 1;

/// Two-state chain with a single decisive step.
///
/// State 0 is "on track", state 1 is an absorbing failure state; episodes
/// start on track. Every action keeps the agent where it is except at step
/// `pivotal_index`: there, action [`PIVOTAL_CORRECT_ACTION`] stays on track
/// while any other action stays on track only with probability `q_base` and
/// falls into the failure state otherwise. Reward 1 is paid at the last step
/// iff the agent is on track, so success is certain after the correct pivotal
/// action and capped at `q_base` after a wrong one.
///
/// When the pivot is the last step there is no transition left to randomize,
/// so the wrong actions pay 0 directly and `q_base` must be 0.
pub fn pivotal_chain<T: Scalar>(
    horizon: usize,
    num_actions: usize,
    pivotal_index: usize,
    q_base: f64,
) -> Result<TabularMdp<T>, MdpError> {
    if horizon == 0 || pivotal_index >= horizon {
        return Err(MdpError::InvalidParameter(format!(
            "pivotal index {pivotal_index} must lie in 0..{horizon}"
        )));
    }
    if num_actions < 2 {
        return Err(MdpError::InvalidParameter(
            "pivotal chain needs at least 2 actions".into(),
        ));
    }
    if !(0.0..1.0).contains(&q_base) {
        return Err(MdpError::InvalidParameter(format!(
            "q_base must lie in [0, 1), got {q_base}"
        )));
    }
    if pivotal_index + 1 == horizon && q_base != 0.0 {
        return Err(MdpError::InvalidParameter(
            "a pivot at the last step admits only q_base = 0".into(),
        ));
    }
    let (ns, na, hz) = (2, num_actions, horizon);
    let mut transitions = vec![T::zero(); hz * ns * na * ns];
    let mut rewards = vec![T::zero(); hz * ns * na];
    for h in 0..hz {
        for s in 0..ns {
            for a in 0..na {
                let base = ((h * ns + s) * na + a) * ns;
                let wrong_pivot = h == pivotal_index && s == ON_TRACK && a != PIVOTAL_CORRECT_ACTION;
                if wrong_pivot {
                    transitions[base + ON_TRACK] = T::lit(q_base);
                    transitions[base + DEAD] = T::lit(1.0 - q_base);
                } else {
                    transitions[base + s] = T::one();
                }
                if h + 1 == hz && s == ON_TRACK && !wrong_pivot {
                    rewards[(h * ns + s) * na + a] = T::one();
                }
            }
        }
    }
    let mut initial = vec![T::zero(); ns];
    initial[ON_TRACK] = T::one();
    TabularMdp::new(ns, na, hz, transitions, rewards, initial, T::one(), true)
}

/// One-step, one-state environment paying `rewards[a]` for action `a`.
/// `r_max` is the larger of 1 and the largest reward.
pub fn bandit<T: Scalar>(rewards: &[T]) -> Result<TabularMdp<T>, MdpError> {
    let na = rewards.len();
    if na == 0 {
        return Err(MdpError::InvalidParameter("bandit needs at least one arm".into()));
    }
    let mut transitions = Vec::with_capacity(na);
    transitions.resize(na, T::one());
    let r_max = rewards.iter().fold(T::one(), |m, &r| m.max(r));
    TabularMdp::new(1, na, 1, transitions, rewards.to_vec(), vec![T::one()], r_max, true)
}

/// Shape and structure of a random MDP.
#[derive(Debug, Clone, Copy)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Rewards only at the last step.
    pub terminal_reward: bool,
    /// Point-mass transition rows.
    pub deterministic: bool,
    /// Rewards drawn from `{0, 1}` instead of `[0, 1]`.
    pub binary_rewards: bool,
    /// Maximum number of reachable next states per row; 0 means dense.
    pub max_support: usize,
}

fn random_row<T: Scalar>(rng: &mut Stream, n: usize, max_support: usize) -> Vec<T> {
    let support = if max_support == 0 {
        n
    } else {
        1 + rng.below(max_support.min(n))
    };
    let mut weights = vec![0.0f64; n];
    for _ in 0..support {
        weights[rng.below(n)] += 0.05 + rng.next_f64();
    }
    let total: f64 = weights.iter().sum();
    let mut row: Vec<T> = weights.iter().map(|&w| T::lit(w / total)).collect();
    // Push the rounding residue into the largest entry so the row sums to one
    // within a couple of ulps in T.
    let sum: T = row.iter().copied().sum();
    let (imax, _) = row.iter().enumerate().fold(
        (0, T::zero()),
        |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
    );
    row[imax] += T::one() - sum;
    row
}

/// Draws a random valid MDP with rewards in `[0, 1]` and `r_max = 1`.
pub fn random_mdp<T: Scalar>(spec: RandomMdpSpec, rng: &mut Stream) -> TabularMdp<T> {
    let RandomMdpSpec {
        num_states: ns,
        num_actions: na,
        horizon: hz,
        ..
    } = spec;
    let mut transitions = Vec::with_capacity(hz * ns * na * ns);
    let mut rewards = Vec::with_capacity(hz * ns * na);
    for h in 0..hz {
        for _s in 0..ns {
            for _a in 0..na {
                if spec.deterministic {
                    let next = rng.below(ns);
                    transitions.extend((0..ns).map(|i| if i == next { T::one() } else { T::zero() }));
                } else {
                    transitions.extend(random_row::<T>(rng, ns, spec.max_support));
                }
                let pays = !spec.terminal_reward || h + 1 == hz;
                let r = if !pays {
                    T::zero()
                } else if spec.binary_rewards {
                    if rng.below(2) == 1 {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    T::lit(rng.next_f64())
                };
                rewards.push(r);
            }
        }
    }
    let initial = random_row::<T>(rng, ns, spec.max_support);
    TabularMdp::new(
        ns,
        na,
        hz,
        transitions,
        rewards,
        initial,
        T::one(),
        spec.terminal_reward,
    )
    .expect("random MDP construction yields valid tables")
}
