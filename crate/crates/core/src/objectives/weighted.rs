use super::{count, LossReport, ObjectiveError, Sense};
use crate::mdp::SoftmaxPolicy;
use crate::scalar::Scalar;
use crate::trajectory::Step;

/// Steps with one advantage each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrajectory<T> {
    pub steps: Vec<Step>,
    pub advantages: Vec<T>,
}

/// Negated advantage-weighted log-likelihood
/// `−mean_y Σ_i exp(Â_i / β) log π(a_i | s_i)`, with `Â_i` clipped to
/// `[−r_max, r_max]` and the weights held constant.
pub fn adv_weighted_sft<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    batch: &[WeightedTrajectory<T>],
    beta: T,
    r_max: T,
) -> Result<LossReport<T>, ObjectiveError> {
    if batch.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = count::<T>(batch.len());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per = Vec::with_capacity(batch.len());
    for (index, w) in batch.iter().enumerate() {
        if w.steps.len() != w.advantages.len() {
            return Err(ObjectiveError::Shape(format!(
                "example {index}: one advantage per step required"
            )));
        }
        let mut total = T::zero();
        for (s, &a) in w.steps.iter().zip(&w.advantages) {
            let weight = (a.max(-r_max).min(r_max) / beta).exp();
            total -= weight * policy.log_prob(s.h, s.state, s.action);
            policy.accumulate_log_prob_grad(s.h, s.state, s.action, -weight / n, &mut grad);
        }
        per.push(total);
    }
    let value = per.iter().copied().sum::<T>() / n;
    Ok(LossReport {
        value,
        gradient: grad,
        per_example: per,
        clipped_steps: 0,
        sense: Sense::Minimize,
    })
}

/// `π(a|s) ∝ π_ref(a|s) exp(A_h(s,a) / β)` row by row; `advantages` is laid
/// out like the logits.
pub fn tilted_policy<T: Scalar>(
    reference: &SoftmaxPolicy<T>,
    advantages: &[T],
    beta: T,
) -> Result<SoftmaxPolicy<T>, ObjectiveError> {
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(ObjectiveError::InvalidParams("beta must be positive".into()));
    }
    if advantages.len() != reference.logits().len() {
        return Err(ObjectiveError::Shape(
            "advantage table does not match the logits".into(),
        ));
    }
    let t = reference.temperature();
    let logits = reference
        .logits()
        .iter()
        .zip(advantages)
        .map(|(&l, &a)| l / t + a / beta)
        .collect();
    Ok(SoftmaxPolicy::from_logits(
        reference.horizon(),
        reference.num_states(),
        reference.num_actions(),
        logits,
    )?)
}
