use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::mdp::{backward_induction, compute_occupancy, sample_trajectory, SoftmaxPolicy, TabularMdp};
use crate::rng::{Purpose, SeedPath};
use crate::scalar::Scalar;

/// How a policy is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalMode {
    /// Dynamic programming.
    Exact,
    /// Mean over `n` sampled episodes.
    MonteCarlo { n: usize, seed: u64 },
}

/// Expected return and success probability of a policy from `d_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub value: f64,
    /// `None` in exact mode when rewards are not paid only at the last step,
    /// where the return distribution is not tracked.
    pub success: Option<f64>,
    /// Standard error of `value` (Monte-Carlo mode only).
    pub value_stderr: Option<f64>,
    pub success_stderr: Option<f64>,
    pub episodes: Option<usize>,
}

/// Evaluates `policy` on `mdp`.
pub fn evaluate<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    mdp: &TabularMdp<T>,
    mode: EvalMode,
) -> Result<Evaluation, TrainError> {
    match mode {
        EvalMode::Exact => {
            let oracle = backward_induction(mdp, policy)?;
            Ok(Evaluation {
                value: oracle.initial_value(mdp).as_f64(),
                success: exact_success(mdp, policy)?,
                value_stderr: None,
                success_stderr: None,
                episodes: None,
            })
        }
        EvalMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(TrainError::Config("evaluation needs at least one episode".into()));
            }
            let root = SeedPath::new(seed).purpose(Purpose::Evaluation);
            let (mut sum, mut sum_sq, mut wins) = (0.0, 0.0, 0usize);
            for k in 0..n {
                let t = sample_trajectory(mdp, policy, root.child(k as u64).seed());
                let r = t.terminal_reward.as_f64();
                sum += r;
                sum_sq += r * r;
                wins += usize::from(mdp.is_success(t.terminal_reward));
            }
            let nf = n as f64;
            let mean = sum / nf;
            let var = if n > 1 {
                ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
            } else {
                0.0
            };
            let p = wins as f64 / nf;
            Ok(Evaluation {
                value: mean,
                success: Some(p),
                value_stderr: Some((var / nf).sqrt()),
                success_stderr: Some((p * (1.0 - p) / nf).sqrt()),
                episodes: Some(n),
            })
        }
    }
}

/// Probability of ending with a successful return, from the last-step
/// occupancy. Only defined when every reward is paid at the last step.
pub(crate) fn exact_success<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
) -> Result<Option<f64>, TrainError> {
    if !mdp.is_terminal_reward() {
        return Ok(None);
    }
    let occ = compute_occupancy(mdp, policy)?;
    let h = mdp.horizon() - 1;
    let mut p = 0.0;
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            if mdp.is_success(mdp.reward(h, s, a)) {
                p += occ.d(h, s, a).as_f64();
            }
        }
    }
    Ok(Some(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{optimal_values, pivotal_chain};

    #[test]
    fn greedy_optimal_policy_always_succeeds() {
        let m = pivotal_chain::<f64>(5, 4, 2, 0.2).unwrap();
        let pol = optimal_values(&m).greedy_policy();
        let e = evaluate(&pol, &m, EvalMode::Exact).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.success, Some(1.0));
    }

    #[test]
    fn uniform_value_and_mc_agree() {
        let m = pivotal_chain::<f64>(5, 4, 2, 0.2).unwrap();
        let pol = SoftmaxPolicy::uniform_for(&m);
        let exact = evaluate(&pol, &m, EvalMode::Exact).unwrap();
        // 1/4 + 3/4 · 0.2
        assert!((exact.value - 0.4).abs() < 1e-15);
        assert!((exact.success.unwrap() - exact.value).abs() < 1e-15);
        let mc = evaluate(&pol, &m, EvalMode::MonteCarlo { n: 10_000, seed: 3 }).unwrap();
        assert!((mc.value - exact.value).abs() <= 3.0 * mc.value_stderr.unwrap());
    }
}
