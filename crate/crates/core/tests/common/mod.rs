//! Independent reference computations shared by the integration tests.
//!
//! Values here are obtained by brute-force path enumeration or by direct
//! formulas, never by calling the library routine under test.

#![allow(dead_code)]

use gpo_core::mdp::{random_mdp, RandomMdpSpec, SoftmaxPolicy, TabularMdp};
use gpo_core::rng::Stream;

/// Sum over every path starting with action `a` at `(h, s)` of
/// `P(path) · return(path)`.
pub fn enumerate_q(mdp: &TabularMdp<f64>, policy: &SoftmaxPolicy<f64>, h: usize, s: usize, a: usize) -> f64 {
    let mut total = 0.0;
    walk_after_action(mdp, policy, h, s, a, 1.0, 0.0, &mut total);
    total
}

/// Sum over every path starting at `(h, s)` of `P(path) · return(path)`.
pub fn enumerate_v(mdp: &TabularMdp<f64>, policy: &SoftmaxPolicy<f64>, h: usize, s: usize) -> f64 {
    let mut total = 0.0;
    walk_from_state(mdp, policy, h, s, 1.0, 0.0, &mut total);
    total
}

/// Best return over all deterministic action sequences adapted to the state,
/// by enumeration of the decision tree.
pub fn enumerate_optimal_v(mdp: &TabularMdp<f64>, h: usize, s: usize) -> f64 {
    if h == mdp.horizon() {
        return 0.0;
    }
    (0..mdp.num_actions())
        .map(|a| {
            let mut q = mdp.reward(h, s, a);
            if h + 1 < mdp.horizon() {
                for (next, &p) in mdp.transition_row(h, s, a).iter().enumerate() {
                    if p > 0.0 {
                        q += p * enumerate_optimal_v(mdp, h + 1, next);
                    }
                }
            }
            q
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn walk_after_action(
    mdp: &TabularMdp<f64>,
    policy: &SoftmaxPolicy<f64>,
    h: usize,
    s: usize,
    a: usize,
    prob: f64,
    ret: f64,
    total: &mut f64,
) {
    let ret = ret + mdp.reward(h, s, a);
    if h + 1 == mdp.horizon() {
        *total += prob * ret;
        return;
    }
    for (next, &p) in mdp.transition_row(h, s, a).iter().enumerate() {
        if p > 0.0 {
            walk_from_state(mdp, policy, h + 1, next, prob * p, ret, total);
        }
    }
}

fn walk_from_state(
    mdp: &TabularMdp<f64>,
    policy: &SoftmaxPolicy<f64>,
    h: usize,
    s: usize,
    prob: f64,
    ret: f64,
    total: &mut f64,
) {
    for (a, p) in policy.probs(h, s).into_iter().enumerate() {
        if p > 0.0 {
            walk_after_action(mdp, policy, h, s, a, prob * p, ret, total);
        }
    }
}

/// Softmax policy with logits uniform on `[-scale, scale]`.
pub fn random_policy(mdp: &TabularMdp<f64>, scale: f64, rng: &mut Stream) -> SoftmaxPolicy<f64> {
    let n = mdp.horizon() * mdp.num_states() * mdp.num_actions();
    let logits = (0..n).map(|_| scale * (2.0 * rng.next_f64() - 1.0)).collect();
    SoftmaxPolicy::from_logits(mdp.horizon(), mdp.num_states(), mdp.num_actions(), logits).unwrap()
}

/// Random MDP with `|S| ∈ [2, max_states]`, `|A| ∈ [2, max_actions]` and
/// `H ∈ [1, max_horizon]`.
pub fn random_small_mdp(
    rng: &mut Stream,
    max_states: usize,
    max_actions: usize,
    max_horizon: usize,
    terminal_reward: bool,
    deterministic: bool,
) -> TabularMdp<f64> {
    let spec = RandomMdpSpec {
        num_states: 2 + rng.below(max_states - 1),
        num_actions: 2 + rng.below(max_actions - 1),
        horizon: 1 + rng.below(max_horizon),
        terminal_reward,
        deterministic,
        binary_rewards: false,
        max_support: 0,
    };
    random_mdp(spec, rng)
}

/// Central finite-difference gradient of `f` at `x` with step `eps`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|j| {
            buf[j] = x[j] + eps;
            let up = f(&buf);
            buf[j] = x[j] - eps;
            let down = f(&buf);
            buf[j] = x[j];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Renders segmented steps the way the command-line tool prints them.
pub fn render_steps(steps: &[String]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(k, s)| format!("step {}: {}\n", k + 1, s.replace('\\', "\\\\").replace('\n', "\\n")))
        .collect()
}
