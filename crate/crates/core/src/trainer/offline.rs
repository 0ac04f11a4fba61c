use super::{step, DatasetStats, OfflineLoss, Pairing, Recorder, TrainConfig, TrainError, TrainOutcome};
use crate::advantage::{advantage_profile, AdvantageMode};
use crate::datagen::{
    collect_pairs, collect_plain, filter_questions, kto_decompose, whole_trajectory_pairs, QuestionPool, ResetStrategy,
};
use crate::mdp::{backward_induction, SoftmaxPolicy, TabularMdp};
use crate::objectives::{adv_weighted_sft, dpo, kto, orpo, simpo, LossReport, ObjectiveError, WeightedTrajectory};
use crate::rng::{Purpose, SeedPath};
use crate::scalar::Scalar;
use crate::trajectory::{KtoExample, PreferencePair};

/// Training data of an offline method.
#[derive(Debug, Clone)]
pub enum OfflineDataset<T> {
    Pairs(Vec<PreferencePair<T>>),
    Tagged(Vec<KtoExample<T>>),
    Weighted(Vec<WeightedTrajectory<T>>),
}

impl<T> OfflineDataset<T> {
    pub fn len(&self) -> usize {
        match self {
            OfflineDataset::Pairs(v) => v.len(),
            OfflineDataset::Tagged(v) => v.len(),
            OfflineDataset::Weighted(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Builds the dataset of an offline method from the reference policy.
///
/// The question pool is filtered first for every method, with the same seed,
/// so critical, random and whole-trajectory pairings draw from identical
/// questions; critical and random pairings also share trajectories and
/// continuation seeds attempt by attempt.
pub fn build_offline_dataset<T: Scalar>(
    config: &TrainConfig,
    mdp: &TabularMdp<T>,
    reference: &SoftmaxPolicy<T>,
    workers: usize,
) -> Result<(OfflineDataset<T>, DatasetStats), TrainError> {
    let loss = config
        .method
        .offline_loss()
        .ok_or_else(|| TrainError::Config(format!("{} is not an offline method", config.method)))?;
    let pool = QuestionPool::from_initial_dist(mdp.clone(), config.questions, config.seed);
    let filtered = filter_questions(
        &pool,
        reference,
        config.filter_samples,
        T::lit(config.filter_temperature),
        config.seed,
        workers,
    )?;
    let mut stats = DatasetStats {
        filter: filtered.report,
        ..Default::default()
    };
    if filtered.pool.is_empty() {
        return Err(TrainError::EmptyDataset(format!(
            "question filter kept nothing ({} all-correct, {} all-incorrect)",
            stats.filter.dropped_easy, stats.filter.dropped_hard
        )));
    }
    if loss == OfflineLoss::AdvSft {
        let data = weighted_trajectories(config, &filtered.pool, reference, workers)?;
        stats.items = data.len();
        return Ok((OfflineDataset::Weighted(data), stats));
    }
    let pairs = match config.effective_pairing() {
        Pairing::WholeTrajectory => {
            let mut p = whole_trajectory_pairs(&filtered);
            p.truncate(config.batch_size);
            p
        }
        pairing => {
            let strategy = match pairing {
                Pairing::Critical => ResetStrategy::Critical {
                    estimates: config.estimates(),
                    gamma: config.gamma,
                },
                _ => ResetStrategy::Random,
            };
            let c = collect_pairs(
                &filtered.pool,
                reference,
                config.batch_size,
                strategy,
                config.budget,
                config.max_attempts,
                config.seed,
                workers,
            )?;
            stats.attempts = c.attempts;
            stats.skipped_flat = c.skipped_flat;
            stats.skipped_budget = c.skipped_budget;
            c.pairs
        }
    };
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset(format!(
            "no preference pairs after {} attempts ({} flat profiles, {} budgets exhausted)",
            stats.attempts, stats.skipped_flat, stats.skipped_budget
        )));
    }
    let data = if loss == OfflineLoss::Kto {
        OfflineDataset::Tagged(kto_decompose(&pairs))
    } else {
        OfflineDataset::Pairs(pairs)
    };
    stats.items = data.len();
    Ok((data, stats))
}

/// Reference trajectories with their per-step advantage profiles.
fn weighted_trajectories<T: Scalar>(
    config: &TrainConfig,
    pool: &QuestionPool<T>,
    reference: &SoftmaxPolicy<T>,
    workers: usize,
) -> Result<Vec<WeightedTrajectory<T>>, TrainError> {
    let buffer = collect_plain(pool, reference, config.batch_size, config.seed, workers)?;
    let oracle = if config.exact_advantages {
        Some(backward_induction(&pool.mdp, reference)?)
    } else {
        None
    };
    let root = SeedPath::new(config.seed).purpose(Purpose::QEstimate);
    buffer
        .entries
        .into_iter()
        .enumerate()
        .map(|(j, e)| {
            let mode = match &oracle {
                Some(o) => AdvantageMode::Exact(o),
                None => AdvantageMode::MonteCarlo {
                    n_samples: config.mc_samples,
                },
            };
            let profile = advantage_profile(&pool.mdp, reference, &e.trajectory, mode, root.child(j as u64).seed())?;
            Ok(WeightedTrajectory {
                steps: e.trajectory.steps,
                advantages: profile.advantages,
            })
        })
        .collect()
}

/// Loss and gradient of an offline method on its dataset.
pub fn offline_objective<T: Scalar>(
    config: &TrainConfig,
    policy: &SoftmaxPolicy<T>,
    reference: &SoftmaxPolicy<T>,
    data: &OfflineDataset<T>,
    r_max: T,
) -> Result<LossReport<T>, ObjectiveError> {
    let p = config.objective_params();
    let beta = T::lit(p.beta);
    match (config.method.offline_loss(), data) {
        (Some(OfflineLoss::Dpo), OfflineDataset::Pairs(d)) => dpo(policy, reference, d, beta),
        (Some(OfflineLoss::Simpo), OfflineDataset::Pairs(d)) => simpo(policy, d, beta, T::lit(p.simpo_margin)),
        (Some(OfflineLoss::Orpo), OfflineDataset::Pairs(d)) => orpo(policy, d, T::lit(p.orpo_lambda)),
        (Some(OfflineLoss::Kto), OfflineDataset::Tagged(d)) => kto(
            policy,
            reference,
            d,
            beta,
            T::lit(p.kto_lambda_d),
            T::lit(p.kto_lambda_u),
            p.kto_ref_point,
        ),
        (Some(OfflineLoss::AdvSft), OfflineDataset::Weighted(d)) => adv_weighted_sft(policy, d, beta, r_max),
        _ => Err(ObjectiveError::Shape(format!(
            "dataset does not match method {}",
            config.method
        ))),
    }
}

/// Builds the dataset once with the uniform reference policy, then runs
/// `iterations` full-batch descent steps on the method's loss.
pub fn train_offline<T: Scalar>(config: &TrainConfig, workers: usize) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let (mdp, _) = config.env.build::<T>()?;
    let reference = SoftmaxPolicy::uniform_for(&mdp);
    let (data, stats) = build_offline_dataset(config, &mdp, &reference, workers)?;
    let lr = T::lit(config.learning_rate);
    let mut policy = reference.clone();
    let mut rec = Recorder::new(&mdp, config);
    for t in 1..=config.iterations {
        let r = offline_objective(config, &policy, &reference, &data, mdp.r_max())?;
        if !r.value.is_finite() {
            let last = policy.clone();
            return Err(rec.diverged(t, "objective is not finite", &last));
        }
        let last = policy.clone();
        if let Err(reason) = step(&mut policy, &r.ascent_direction(), lr) {
            return Err(rec.diverged(t, reason, &last));
        }
        rec.record(t, &policy, Some(r.value.as_f64()))?;
    }
    Ok(TrainOutcome {
        history: rec.history,
        policy,
        dataset: Some(stats),
    })
}
