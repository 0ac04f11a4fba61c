use super::{MdpError, SoftmaxPolicy, TabularMdp};
use crate::rng::{Purpose, SeedPath, Stream};
use crate::scalar::Scalar;
use crate::trajectory::{Origin, Step, Trajectory};

/// Steps generated after a reset point and the reward they collect.
#[derive(Debug, Clone, PartialEq)]
pub struct Continuation<T> {
    pub steps: Vec<Step>,
    /// Sum of rewards from the reset step to the end of the episode.
    pub return_to_go: T,
}

/// Draws `s' ~ P_h(·|s,a)`, skipping the draw on point-mass rows.
pub fn sample_next_state<T: Scalar>(mdp: &TabularMdp<T>, h: usize, s: usize, a: usize, rng: &mut Stream) -> usize {
    if let Some(next) = mdp.deterministic_next(h, s, a) {
        return next;
    }
    let row = mdp.transition_row(h, s, a);
    let weights: Vec<f64> = row.iter().map(|p| p.as_f64()).collect();
    rng.categorical(&weights)
}

/// Plays `a` at `(h, s)` and follows the policy to the end of the episode.
/// The returned steps start at `h + 1`; the return includes `r_h(s, a)`.
fn continue_after<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    h: usize,
    s: usize,
    a: usize,
    rng: &mut Stream,
) -> Continuation<T> {
    let mut steps = Vec::with_capacity(mdp.horizon() - h - 1);
    let mut total = mdp.reward(h, s, a);
    let (mut state, mut action) = (s, a);
    for j in h + 1..mdp.horizon() {
        state = sample_next_state(mdp, j - 1, state, action, rng);
        action = policy.sample_action(j, state, rng);
        total += mdp.reward(j, state, action);
        steps.push(Step { h: j, state, action });
    }
    Continuation {
        steps,
        return_to_go: total,
    }
}

/// Continuation after committing to action `a` at `(h, s)`: one draw of the
/// quantity whose mean is `Q_h(s, a)`.
pub fn rollout_after<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    h: usize,
    s: usize,
    a: usize,
    seed: u64,
) -> Result<Continuation<T>, MdpError> {
    mdp.check_step(h)?;
    mdp.check_state(s)?;
    if a >= mdp.num_actions() {
        return Err(MdpError::InvalidParameter(format!("action {a} out of range")));
    }
    Ok(continue_after(mdp, policy, h, s, a, &mut Stream::new(seed)))
}

/// Rollout from state `s` at step `h`, sampling the action at `h` as well:
/// one draw of the quantity whose mean is `V_h(s)`. The continuation holds
/// `H − h` steps.
pub fn rollout_from<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    s: usize,
    h: usize,
    seed: u64,
) -> Result<Continuation<T>, MdpError> {
    mdp.check_step(h)?;
    mdp.check_state(s)?;
    let mut rng = Stream::new(seed);
    let a = policy.sample_action(h, s, &mut rng);
    let mut c = continue_after(mdp, policy, h, s, a, &mut rng);
    c.steps.insert(0, Step { h, state: s, action: a });
    Ok(c)
}

/// Full episode from a fixed start state. A pure function of its inputs.
pub fn sample_trajectory_from<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
    question_id: u64,
    start_state: usize,
    seed: u64,
) -> Trajectory<T> {
    let c = rollout_from(mdp, policy, start_state, 0, seed).expect("start state in range");
    Trajectory {
        question_id,
        steps: c.steps,
        terminal_reward: c.return_to_go,
        seed,
        origin: Origin::Fresh,
    }
}

/// Full episode with the start state drawn from `d_0`.
pub fn sample_trajectory<T: Scalar>(mdp: &TabularMdp<T>, policy: &SoftmaxPolicy<T>, seed: u64) -> Trajectory<T> {
    let mut init = SeedPath::new(seed).purpose(Purpose::InitialState).stream();
    let weights: Vec<f64> = mdp.initial_dist().iter().map(|p| p.as_f64()).collect();
    let start = init.categorical(&weights);
    sample_trajectory_from(mdp, policy, 0, start, seed)
}

/// Recomputes a trajectory's return from its recorded steps, checking that
/// every transition it took has positive probability.
pub fn replay_return<T: Scalar>(mdp: &TabularMdp<T>, traj: &Trajectory<T>) -> Result<T, MdpError> {
    if traj.steps.len() != mdp.horizon() {
        return Err(MdpError::Dimension(format!(
            "trajectory has {} steps for horizon {}",
            traj.steps.len(),
            mdp.horizon()
        )));
    }
    let mut total = T::zero();
    for (j, st) in traj.steps.iter().enumerate() {
        mdp.check_state(st.state)?;
        if st.h != j || st.action >= mdp.num_actions() {
            return Err(MdpError::InvalidParameter(format!("malformed step {j}: {st:?}")));
        }
        if j == 0 && mdp.initial_dist()[st.state] == T::zero() {
            return Err(MdpError::InvalidParameter(format!(
                "start state {} has zero initial probability",
                st.state
            )));
        }
        if j > 0 {
            let prev = &traj.steps[j - 1];
            if mdp.transition_row(j - 1, prev.state, prev.action)[st.state] == T::zero() {
                return Err(MdpError::InvalidParameter(format!(
                    "impossible transition into step {j}"
                )));
            }
        }
        total += mdp.reward(j, st.state, st.action);
    }
    Ok(total)
}
