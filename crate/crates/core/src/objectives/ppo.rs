use super::{count, LossReport, ObjectiveError, Sense};
use crate::advantage::VTable;
use crate::datagen::BufferEntry;
use crate::mdp::{OracleValues, SoftmaxPolicy, TabularMdp};
use crate::scalar::Scalar;

/// State-value baseline for per-step advantages.
#[derive(Debug, Clone, Copy)]
pub enum Baseline<'a, T> {
    /// Exact values of the collecting policy: `A_i = Q(s_i, a_i) − V(s_i)`.
    Oracle(&'a OracleValues<T>),
    /// Fitted values: `A_i = G_i − V̂(s_i)` with `G_i` the return-to-go.
    Empirical(&'a VTable<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoAdvantages<T> {
    /// One advantage per step of each buffer entry.
    pub per_entry: Vec<Vec<T>>,
    /// Steps whose state had no fitted value and used a zero baseline.
    pub missing_baseline: usize,
}

/// Per-step advantages for the clipped objective.
pub fn per_step_advantage_for_ppo<T: Scalar>(
    mdp: &TabularMdp<T>,
    buffer: &[BufferEntry<T>],
    baseline: Baseline<'_, T>,
) -> PpoAdvantages<T> {
    let mut missing = 0;
    let per_entry = buffer
        .iter()
        .map(|e| {
            let steps = &e.trajectory.steps;
            match baseline {
                Baseline::Oracle(o) => steps
                    .iter()
                    .map(|s| o.q(s.h, s.state, s.action) - o.v(s.h, s.state))
                    .collect(),
                Baseline::Empirical(v) => {
                    let mut to_go = vec![T::zero(); steps.len()];
                    let mut acc = T::zero();
                    for (i, s) in steps.iter().enumerate().rev() {
                        acc += mdp.reward(s.h, s.state, s.action);
                        to_go[i] = acc;
                    }
                    steps
                        .iter()
                        .zip(to_go)
                        .map(|(s, g)| match v.get(s.h, s.state) {
                            Some(b) => g - b,
                            None => {
                                missing += 1;
                                g
                            }
                        })
                        .collect()
                }
            }
        })
        .collect();
    PpoAdvantages {
        per_entry,
        missing_baseline: missing,
    }
}

/// Clipped surrogate
/// `mean_y (1/|y|) Σ_i min(ρ_i A_i, clip(ρ_i, 1−ε, 1+ε) A_i)` with
/// `ρ_i = π(a_i|s_i) / π_old(a_i|s_i)`, over the steps each entry trains on
/// (from `train_from`). To be maximized; advantages are constants.
pub fn ppo_clip<T: Scalar>(
    policy: &SoftmaxPolicy<T>,
    old_policy: &SoftmaxPolicy<T>,
    buffer: &[BufferEntry<T>],
    advantages: &[Vec<T>],
    clip_eps: T,
) -> Result<LossReport<T>, ObjectiveError> {
    if buffer.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    super::check_same_shape(policy, old_policy)?;
    if advantages.len() != buffer.len() {
        return Err(ObjectiveError::Shape(format!(
            "{} advantage rows for {} buffer entries",
            advantages.len(),
            buffer.len()
        )));
    }
    let snapshot = old_policy.fingerprint();
    let lo = T::one() - clip_eps;
    let hi = T::one() + clip_eps;
    let n = count::<T>(buffer.len());
    let mut grad = vec![T::zero(); policy.logits().len()];
    let mut per_example = Vec::with_capacity(buffer.len());
    let mut clipped_steps = 0;
    for (index, (e, adv)) in buffer.iter().zip(advantages).enumerate() {
        if e.snapshot_id != snapshot {
            return Err(ObjectiveError::SnapshotMismatch {
                index,
                found: e.snapshot_id,
                expected: snapshot,
            });
        }
        let steps = &e.trajectory.steps;
        if adv.len() != steps.len() {
            return Err(ObjectiveError::Shape(format!("entry {index}: advantage row length")));
        }
        let trained = &steps[e.train_from.min(steps.len())..];
        if trained.is_empty() {
            return Err(ObjectiveError::ZeroLength { index });
        }
        let len = count::<T>(trained.len());
        let mut total = T::zero();
        for (s, &a) in trained.iter().zip(&adv[e.train_from..]) {
            let ratio = (policy.log_prob(s.h, s.state, s.action) - old_policy.log_prob(s.h, s.state, s.action)).exp();
            let clipped_active = (a > T::zero() && ratio > hi) || (a < T::zero() && ratio < lo);
            if clipped_active {
                clipped_steps += 1;
                total += ratio.max(lo).min(hi) * a;
            } else {
                total += ratio * a;
                // d(ρ A)/dθ = A ρ ∇ log π
                policy.accumulate_log_prob_grad(s.h, s.state, s.action, a * ratio / (len * n), &mut grad);
            }
        }
        per_example.push(total / len);
    }
    let value = per_example.iter().copied().sum::<T>() / n;
    Ok(LossReport {
        value,
        gradient: grad,
        per_example,
        clipped_steps,
        sense: Sense::Maximize,
    })
}
