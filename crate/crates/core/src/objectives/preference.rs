//! Pairwise and single-example preference losses. Sequence lengths count
//! steps; every loss is averaged over the batch.

use super::{
    accumulate_sequence_grad, check_same_shape, count, sequence_log_prob, KtoRefPoint, LossReport, ObjectiveError,
    Sense,
};
use crate::mdp::SoftmaxPolicy;
use crate::scalar::Scalar;
use crate::trajectory::{KtoExample, PreferencePair};

fn report<T: Scalar>(per_example: Vec<T>, gradient: Vec<T>) -> LossReport<T> {
    let value = per_example.iter().copied().sum::<T>() / count::<T>(per_example.len());
    LossReport {
        value,
        gradient,
        per_example,
        clipped_steps: 0,
        sense: Sense::Minimize,
    }
}

/// `mean −log σ(β Δ)` with
/// `Δ = (log π(y⁺) − log π_ref(y⁺)) − (log π(y⁻) − log π_ref(y⁻))`.
pub fn dpo<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    reference: &SoftmaxPolicy<T>,
    pairs: &[PreferencePair<T>],
    beta: T,
) -> Result<LossReport<T>, ObjectiveError> {
    if pairs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    check_same_shape(policy, reference)?;
    let n = count::<T>(pairs.len());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (pos, neg) = (&p.positive.steps, &p.negative.steps);
        let delta = (sequence_log_prob(policy, pos) - sequence_log_prob(reference, pos))
            - (sequence_log_prob(policy, neg) - sequence_log_prob(reference, neg));
        per.push((-beta * delta).softplus());
        // d/dΔ softplus(−βΔ) = −β σ(−βΔ)
        let k = -beta * (-beta * delta).sigmoid() / n;
        accumulate_sequence_grad(policy, pos, k, &mut grad);
        accumulate_sequence_grad(policy, neg, -k, &mut grad);
    }
    Ok(report(per, grad))
}

/// `mean −log σ(β log π(y⁺)/|y⁺| − β log π(y⁻)/|y⁻| − margin)`.
pub fn simpo<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    pairs: &[PreferencePair<T>],
    beta: T,
    margin: T,
) -> Result<LossReport<T>, ObjectiveError> {
    if pairs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = count::<T>(pairs.len());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per = Vec::with_capacity(pairs.len());
    for (index, p) in pairs.iter().enumerate() {
        let (pos, neg) = (&p.positive.steps, &p.negative.steps);
        if pos.is_empty() || neg.is_empty() {
            return Err(ObjectiveError::ZeroLength { index });
        }
        let (lp, ln) = (count::<T>(pos.len()), count::<T>(neg.len()));
        let z = beta * sequence_log_prob(policy, pos) / lp - beta * sequence_log_prob(policy, neg) / ln - margin;
        per.push((-z).softplus());
        let k = -(-z).sigmoid() / n;
        accumulate_sequence_grad(policy, pos, k * beta / lp, &mut grad);
        accumulate_sequence_grad(policy, neg, -k * beta / ln, &mut grad);
    }
    Ok(report(per, grad))
}

/// Mean length-normalized log-likelihood `ℓ = log π(y)/|y|` and
/// `log(odds(e^ℓ)) = ℓ − log(1 − e^ℓ)`, with `d log-odds / dℓ`.
fn log_odds<T: Scalar>(ell: T) -> (T, T) {
    let one_minus_p = -ell.exp_m1();
    (ell - one_minus_p.ln(), T::one() / one_minus_p)
}

/// `mean [ −ℓ(y⁺) − λ log σ(log-odds(y⁺) − log-odds(y⁻)) ]` where `ℓ` is the
/// length-normalized log-likelihood and the odds are of `p = e^ℓ`.
pub fn orpo<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    pairs: &[PreferencePair<T>],
    lambda: T,
) -> Result<LossReport<T>, ObjectiveError> {
    if pairs.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    let n = count::<T>(pairs.len());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per = Vec::with_capacity(pairs.len());
    for (index, p) in pairs.iter().enumerate() {
        let (pos, neg) = (&p.positive.steps, &p.negative.steps);
        if pos.is_empty() || neg.is_empty() {
            return Err(ObjectiveError::ZeroLength { index });
        }
        let (lp, ln) = (count::<T>(pos.len()), count::<T>(neg.len()));
        let ell_pos = sequence_log_prob(policy, pos) / lp;
        let ell_neg = sequence_log_prob(policy, neg) / ln;
        if ell_pos >= T::zero() || ell_neg >= T::zero() {
            return Err(ObjectiveError::DegenerateLikelihood { index });
        }
        let (lo_pos, dlo_pos) = log_odds(ell_pos);
        let (lo_neg, dlo_neg) = log_odds(ell_neg);
        let diff = lo_pos - lo_neg;
        per.push(-ell_pos + lambda * (-diff).softplus());
        // d/d diff of λ softplus(−diff) = −λ σ(−diff)
        let k = -lambda * (-diff).sigmoid();
        let d_ell_pos = (-T::one() + k * dlo_pos) / n;
        let d_ell_neg = (-k * dlo_neg) / n;
        accumulate_sequence_grad(policy, pos, d_ell_pos / lp, &mut grad);
        accumulate_sequence_grad(policy, neg, d_ell_neg / ln, &mut grad);
    }
    Ok(report(per, grad))
}

/// Prospect-style loss on tagged examples with `r = log π(y) − log π_ref(y)`:
/// desirable examples contribute `λ_D (1 − σ(β (r − z₀)))`, undesirable ones
/// `λ_U (1 − σ(β (z₀ − r)))`. With [`KtoRefPoint::BatchMeanKl`], `z₀` is
/// `max(0, mean r)` over the batch and is not differentiated.
pub fn kto<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    reference: &SoftmaxPolicy<T>,
    examples: &[KtoExample<T>],
    beta: T,
    lambda_d: T,
    lambda_u: T,
    ref_point: KtoRefPoint,
) -> Result<LossReport<T>, ObjectiveError> {
    if examples.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    check_same_shape(policy, reference)?;
    let n = count::<T>(examples.len());
    let ratios: Vec<T> = examples
        .iter()
        .map(|e| sequence_log_prob(policy, &e.trajectory.steps) - sequence_log_prob(reference, &e.trajectory.steps))
        .collect();
    let z0 = match ref_point {
        KtoRefPoint::Constant(z) => T::lit(z),
        KtoRefPoint::BatchMeanKl => {
            // Each completion scored under the next example's prompt; in a
            // tabular environment the log-ratio does not depend on which
            // question it is attached to, so this is the batch mean.
            let shifted: T = (0..ratios.len()).map(|i| ratios[(i + 1) % ratios.len()]).sum();
            (shifted / n).max(T::zero())
        }
    };
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per = Vec::with_capacity(examples.len());
    for (e, &r) in examples.iter().zip(&ratios) {
        // 1 − σ(x) is evaluated as σ(−x) to keep precision in the tails.
        let (loss, d_r) = if e.desirable {
            let x = beta * (r - z0);
            let rest = (-x).sigmoid();
            (lambda_d * rest, -lambda_d * beta * x.sigmoid() * rest)
        } else {
            let x = beta * (z0 - r);
            let rest = (-x).sigmoid();
            (lambda_u * rest, lambda_u * beta * x.sigmoid() * rest)
        };
        per.push(loss);
        accumulate_sequence_grad(policy, &e.trajectory.steps, d_r / n, &mut grad);
    }
    Ok(report(per, grad))
}
