use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::mdp::{backward_induction, compute_occupancy, SoftmaxPolicy, TabularMdp};
use crate::objectives::tilted_policy;
use crate::scalar::Scalar;

/// Optimization budget and reporting threshold for [`verify_theorem2`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Options {
    pub max_iterations: usize,
    /// Stop once the gradient sup-norm falls to this value.
    pub grad_tol: f64,
    /// States visited by the reference policy with at least this probability
    /// are compared.
    pub occupancy_threshold: f64,
    /// `None` picks `2 / (β² · max occupancy)`, the inverse of a bound on the
    /// loss curvature.
    pub learning_rate: Option<f64>,
}

impl Default for Theorem2Options {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            grad_tol: 1e-6,
            occupancy_threshold: 1e-3,
            learning_rate: None,
        }
    }
}

/// Distance between the policy trained by per-step preference optimization
/// and the closed-form advantage-tilted policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub beta: f64,
    /// Largest total-variation distance between trained and tilted rows over
    /// the compared states.
    pub max_tv: f64,
    /// Largest total-variation distance between trained and reference rows.
    pub max_tv_to_reference: f64,
    pub states_compared: usize,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_loss: f64,
    /// Whether the gradient sup-norm reached the tolerance.
    pub converged: bool,
}

/// Population per-step DPO loss with Bradley-Terry preferences on exact
/// advantages:
///
/// `Σ_{h,s} w_h(s) Σ_{a≠b} π_ref(a|s) π_ref(b|s) · [−σ(A(a) − A(b)) log σ(β Δ_ab)]`
///
/// where `Δ_ab` is the difference of the log-ratios `log π/π_ref` of `a` and
/// `b` and `w_h(s)` is the reference occupancy. Returns the value and its
/// gradient with respect to the logits.
pub fn per_step_dpo_loss<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    reference: &SoftmaxPolicy<T>,
    advantages: &[T],
    state_weights: &[T],
    beta: T,
) -> (T, Vec<T>) {
    let (hz, ns, na) = (policy.horizon(), policy.num_states(), policy.num_actions());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut value = T::zero();
    for h in 0..hz {
        for s in 0..ns {
            let w = state_weights[h * ns + s];
            if w == T::zero() {
                continue;
            }
            let lp = policy.log_probs(h, s);
            let lr = reference.log_probs(h, s);
            let pr = reference.probs(h, s);
            let base = policy.index(h, s, 0);
            for a in 0..na {
                for b in 0..na {
                    if a == b {
                        continue;
                    }
                    let pair_w = w * pr[a] * pr[b];
                    let label = (advantages[base + a] - advantages[base + b]).sigmoid();
                    let delta = (lp[a] - lr[a]) - (lp[b] - lr[b]);
                    value += pair_w * label * (-beta * delta).softplus();
                    // d/dΔ [−ℓ log σ(βΔ)] = −ℓ β σ(−βΔ)
                    let k = -pair_w * label * beta * (-beta * delta).sigmoid();
                    policy.accumulate_log_prob_grad(h, s, a, k, &mut grad);
                    policy.accumulate_log_prob_grad(h, s, b, -k, &mut grad);
                }
            }
        }
    }
    (value, grad)
}

fn total_variation<T: Scalar>(p: &[T], q: &[T]) -> f64 {
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
        .sum::<f64>()
}

/// Trains a fresh copy of `reference` by gradient descent on
/// [`per_step_dpo_loss`] and compares it with
/// `tilted_policy(reference, A, β)` on the states the reference visits.
pub fn verify_theorem2<T: Scalar>(
    mdp: &TabularMdp<T>,
    reference: &SoftmaxPolicy<T>,
    beta: f64,
    options: Theorem2Options,
) -> Result<Theorem2Report, TrainError> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(TrainError::Config("beta must be positive".into()));
    }
    let oracle = backward_induction(mdp, reference)?;
    let adv = oracle.advantage_table()?;
    let occ = compute_occupancy(mdp, reference)?;
    let (hz, ns) = (mdp.horizon(), mdp.num_states());
    let weights: Vec<T> = (0..hz)
        .flat_map(|h| (0..ns).map(move |s| (h, s)))
        .map(|(h, s)| occ.state(h, s))
        .collect();
    let w_max = weights.iter().fold(0.0f64, |m, w| m.max(w.as_f64()));
    let b = T::lit(beta);
    let lr = T::lit(options.learning_rate.unwrap_or(2.0 / (beta * beta * w_max)));
    let mut policy = reference.clone();
    let mut iterations = 0;
    let (mut loss, mut grad) = per_step_dpo_loss(&policy, reference, &adv, &weights, b);
    let sup = |g: &[T]| g.iter().fold(0.0f64, |m, x| m.max(x.as_f64().abs()));
    while sup(&grad) > options.grad_tol && iterations < options.max_iterations {
        let next: Vec<T> = policy.logits().iter().zip(&grad).map(|(&x, &g)| x - lr * g).collect();
        policy.set_logits(next)?;
        iterations += 1;
        (loss, grad) = per_step_dpo_loss(&policy, reference, &adv, &weights, b);
    }
    let final_grad_norm = sup(&grad);
    let tilted = tilted_policy(reference, &adv, b)?;
    let mut report = Theorem2Report {
        beta,
        max_tv: 0.0,
        max_tv_to_reference: 0.0,
        states_compared: 0,
        iterations,
        final_grad_norm,
        final_loss: loss.as_f64(),
        converged: final_grad_norm <= options.grad_tol,
    };
    for h in 0..hz {
        for s in 0..ns {
            if weights[h * ns + s].as_f64() < options.occupancy_threshold {
                continue;
            }
            let trained = policy.probs(h, s);
            report.states_compared += 1;
            report.max_tv = report.max_tv.max(total_variation(&trained, &tilted.probs(h, s)));
            report.max_tv_to_reference = report
                .max_tv_to_reference
                .max(total_variation(&trained, &reference.probs(h, s)));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{bandit, pivotal_chain};
    use crate::objectives::finite_diff_check;

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let m = pivotal_chain::<f64>(3, 3, 1, 0.2).unwrap();
        let reference = SoftmaxPolicy::uniform_for(&m);
        let adv = backward_induction(&m, &reference).unwrap().advantage_table().unwrap();
        let weights = vec![0.7, 0.3, 1.0, 0.5, 0.2, 0.9];
        let theta: Vec<f64> = (0..reference.logits().len()).map(|i| (i as f64 * 1.3).sin()).collect();
        let pol = SoftmaxPolicy::from_logits(3, 2, 3, theta.clone()).unwrap();
        let (_, g) = per_step_dpo_loss(&pol, &reference, &adv, &weights, 0.5);
        let f = |x: &[f64]| {
            let p = SoftmaxPolicy::from_logits(3, 2, 3, x.to_vec())?;
            Ok(per_step_dpo_loss(&p, &reference, &adv, &weights, 0.5).0)
        };
        let r = finite_diff_check(f, &theta, &g, 1e-5, 200, 0).unwrap();
        assert!(r.max_rel_error <= 1e-6, "{r:?}");
    }

    #[test]
    fn zero_advantages_leave_reference_in_place() {
        let m = bandit(&[0.5f64, 0.5, 0.5]).unwrap();
        let reference = SoftmaxPolicy::from_logits(1, 1, 3, vec![0.3, -0.2, 0.1]).unwrap();
        let r = verify_theorem2(&m, &reference, 0.1, Theorem2Options::default()).unwrap();
        assert!(r.converged);
        assert!(r.max_tv_to_reference <= 1e-3 && r.max_tv <= 1e-3, "{r:?}");
    }

    #[test]
    fn large_beta_stays_near_reference() {
        let m = pivotal_chain::<f64>(4, 3, 1, 0.2).unwrap();
        let reference = SoftmaxPolicy::uniform_for(&m);
        let r = verify_theorem2(&m, &reference, 1e4, Theorem2Options::default()).unwrap();
        assert!(r.max_tv <= 1e-3 && r.max_tv_to_reference <= 1e-3, "{r:?}");
    }
}
