//! Training-data pipelines: question filtering, reset-and-rollout buffers for
//! policy-gradient training, preference pairs from resets at the critical
//! step (or at a uniformly random step), and the KTO split of pairs.
//!
//! Every attempt `j` of a collection draws its question, trajectory, Q
//! estimates, reset index and continuations from streams keyed by `j`, so
//! GPO and random-reset collections with the same seed see the same
//! questions and trajectories and differ only in where they reset.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advantage::{advantage_profile, AdvantageError, AdvantageMode, Gamma, SelectionMode};
use crate::mdp::{
    backward_induction, rollout_after, sample_trajectory_from, MdpError, OracleValues, SoftmaxPolicy, TabularMdp,
};
use crate::parallel::map_indexed;
use crate::rng::{Purpose, SeedPath};
use crate::scalar::Scalar;
use crate::trajectory::{KtoExample, Origin, PairSource, PreferencePair, Step, Trajectory};

/// Default number of continuations tried per question when looking for one
/// success and one failure.
pub const DEFAULT_BUDGET: usize = 8;
/// Default number of samples per question in the difficulty filter.
pub const DEFAULT_FILTER_SAMPLES: usize = 8;
pub const DEFAULT_FILTER_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("question pool is empty")]
    EmptyPool,
    #[error("preference pairs need a binary terminal-reward environment")]
    NonBinaryReward,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Advantage(#[from] AdvantageError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Outcome counts from the difficulty filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub successes: usize,
    pub attempts: usize,
}

/// A prompt: an episode start state in the pool's environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub start_state: usize,
    pub stats: Option<QuestionStats>,
}

/// Questions sharing one environment.
#[derive(Debug, Clone)]
pub struct QuestionPool<T> {
    pub mdp: TabularMdp<T>,
    pub questions: Vec<Question>,
}

impl<T: Scalar> QuestionPool<T> {
    /// `n` questions with ids `0..n` and start states drawn from `d_0`.
    pub fn from_initial_dist(mdp: TabularMdp<T>, n: usize, seed: u64) -> Self {
        let weights: Vec<f64> = mdp.initial_dist().iter().map(|p| p.as_f64()).collect();
        let root = SeedPath::new(seed).purpose(Purpose::InitialState);
        let questions = (0..n as u64)
            .map(|id| Question {
                id,
                start_state: root.child(id).stream().categorical(&weights),
                stats: None,
            })
            .collect();
        Self { mdp, questions }
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    fn draw(&self, root: SeedPath, attempt: usize) -> &Question {
        let i = root
            .purpose(Purpose::QuestionDraw)
            .child(attempt as u64)
            .stream()
            .below(self.len());
        &self.questions[i]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped_easy: usize,
    pub dropped_hard: usize,
}

/// Filtered pool plus the samples the decision was based on.
#[derive(Debug, Clone)]
pub struct FilterOutcome<T> {
    pub pool: QuestionPool<T>,
    pub report: FilterReport,
    /// Per kept question, its `k` samples.
    pub samples: Vec<Vec<Trajectory<T>>>,
}

/// Samples `k` trajectories per question from the policy at `temperature`
/// and keeps the questions with at least one success and one failure.
pub fn filter_questions<T: Scalar>(
    pool: &QuestionPool<T>,
    policy: &SoftmaxPolicy<T>,
    k: usize,
    temperature: T,
    seed: u64,
    workers: usize,
) -> Result<FilterOutcome<T>, DatagenError> {
    if k < 2 {
        return Err(DatagenError::InvalidParameter("filter needs k >= 2 samples".into()));
    }
    policy.check_dims(&pool.mdp)?;
    let hot = policy.clone().with_temperature(temperature)?;
    let root = SeedPath::new(seed).purpose(Purpose::Filter);
    let per_question = map_indexed(workers, pool.len(), |qi| {
        let q = &pool.questions[qi];
        (0..k)
            .map(|j| {
                sample_trajectory_from(
                    &pool.mdp,
                    &hot,
                    q.id,
                    q.start_state,
                    root.child(q.id).child(j as u64).seed(),
                )
            })
            .collect::<Vec<_>>()
    });
    let mut report = FilterReport::default();
    let mut kept = Vec::new();
    let mut samples = Vec::new();
    for (q, trajs) in pool.questions.iter().zip(per_question) {
        let successes = trajs.iter().filter(|t| pool.mdp.is_success(t.terminal_reward)).count();
        if successes == k {
            report.dropped_easy += 1;
        } else if successes == 0 {
            report.dropped_hard += 1;
        } else {
            report.kept += 1;
            kept.push(Question {
                stats: Some(QuestionStats { successes, attempts: k }),
                ..q.clone()
            });
            samples.push(trajs);
        }
    }
    Ok(FilterOutcome {
        pool: QuestionPool {
            mdp: pool.mdp.clone(),
            questions: kept,
        },
        report,
        samples,
    })
}

/// One whole-trajectory pair per kept question: its first successful and
/// first failed filter sample.
pub fn whole_trajectory_pairs<T: Scalar>(outcome: &FilterOutcome<T>) -> Vec<PreferencePair<T>> {
    let mdp = &outcome.pool.mdp;
    outcome
        .samples
        .iter()
        .filter_map(|trajs| {
            let pos = trajs.iter().find(|t| mdp.is_success(t.terminal_reward))?;
            let neg = trajs.iter().find(|t| !mdp.is_success(t.terminal_reward))?;
            Some(PreferencePair {
                question_id: pos.question_id,
                positive: Trajectory {
                    origin: Origin::Positive { reset_index: None },
                    ..pos.clone()
                },
                negative: Trajectory {
                    origin: Origin::Negative { reset_index: None },
                    ..neg.clone()
                },
                critical_index: None,
                shared_prefix_len: 0,
                source: PairSource::WholeTrajectory,
            })
        })
        .collect()
}

/// Where Q estimates come from during collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateSpec {
    MonteCarlo {
        n_samples: usize,
    },
    /// Exact values of the collecting policy.
    Exact,
}

enum Estimator<'a, T> {
    MonteCarlo(usize),
    Exact(&'a OracleValues<T>),
}

impl<'a, T: Scalar> Estimator<'a, T> {
    fn mode(&self) -> AdvantageMode<'a, T> {
        match *self {
            Estimator::MonteCarlo(n) => AdvantageMode::MonteCarlo { n_samples: n },
            Estimator::Exact(o) => AdvantageMode::Exact(o),
        }
    }
}

fn oracle_if_exact<T: Scalar>(
    spec: EstimateSpec,
    mdp: &TabularMdp<T>,
    policy: &SoftmaxPolicy<T>,
) -> Result<Option<OracleValues<T>>, DatagenError> {
    match spec {
        EstimateSpec::Exact => Ok(Some(backward_induction(mdp, policy)?)),
        EstimateSpec::MonteCarlo { n_samples: 0 } => {
            Err(DatagenError::InvalidParameter("mc_samples must be at least 1".into()))
        }
        EstimateSpec::MonteCarlo { .. } => Ok(None),
    }
}

fn estimator<T: Scalar>(spec: EstimateSpec, oracle: &Option<OracleValues<T>>) -> Estimator<'_, T> {
    match (spec, oracle) {
        (EstimateSpec::Exact, Some(o)) => Estimator::Exact(o),
        (EstimateSpec::MonteCarlo { n_samples }, _) => Estimator::MonteCarlo(n_samples),
        (EstimateSpec::Exact, None) => unreachable!("exact spec always carries an oracle"),
    }
}

fn prefix_return<T: Scalar>(mdp: &TabularMdp<T>, steps: &[Step]) -> T {
    steps.iter().map(|s| mdp.reward(s.h, s.state, s.action)).sum()
}

/// A collected episode and what the learner needs to train on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BufferEntry<T> {
    pub trajectory: Trajectory<T>,
    pub reward: T,
    /// Fingerprint of the policy that generated the sampled steps.
    pub snapshot_id: u64,
    /// The profile carried no signal, so the original trajectory was kept.
    pub flat_profile: bool,
    /// First step generated by the snapshot after the reset; earlier steps
    /// are a replayed prefix.
    pub train_from: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RolloutBuffer<T> {
    pub entries: Vec<BufferEntry<T>>,
    pub capacity: usize,
}

impl<T> RolloutBuffer<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fresh trajectories with no reset.
pub fn collect_plain<T: Scalar>(
    pool: &QuestionPool<T>,
    policy: &SoftmaxPolicy<T>,
    n_trajectories: usize,
    seed: u64,
    workers: usize,
) -> Result<RolloutBuffer<T>, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    policy.check_dims(&pool.mdp)?;
    let root = SeedPath::new(seed);
    let snapshot_id = policy.fingerprint();
    let entries = map_indexed(workers, n_trajectories, |j| {
        let q = pool.draw(root, j);
        let t = sample_trajectory_from(
            &pool.mdp,
            policy,
            q.id,
            q.start_state,
            root.purpose(Purpose::Trajectory).child(j as u64).seed(),
        );
        BufferEntry {
            reward: t.terminal_reward,
            trajectory: t,
            snapshot_id,
            flat_profile: false,
            train_from: 0,
        }
    });
    Ok(RolloutBuffer {
        capacity: n_trajectories,
        entries,
    })
}

/// Generates a trajectory, profiles it, resets at the selected step and
/// stores the prefix joined with a fresh continuation. Flat profiles store
/// the original trajectory, flagged.
pub fn collect_procedure_one<T: Scalar>(
    pool: &QuestionPool<T>,
    policy: &SoftmaxPolicy<T>,
    n_trajectories: usize,
    estimates: EstimateSpec,
    gamma: Gamma,
    seed: u64,
    workers: usize,
) -> Result<RolloutBuffer<T>, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    policy.check_dims(&pool.mdp)?;
    let oracle = oracle_if_exact(estimates, &pool.mdp, policy)?;
    let est = estimator(estimates, &oracle);
    let mdp = &pool.mdp;
    let root = SeedPath::new(seed);
    let snapshot_id = policy.fingerprint();
    let entries = map_indexed(workers, n_trajectories, |j| -> Result<BufferEntry<T>, DatagenError> {
        let key = j as u64;
        let q = pool.draw(root, j);
        let traj = sample_trajectory_from(
            mdp,
            policy,
            q.id,
            q.start_state,
            root.purpose(Purpose::Trajectory).child(key).seed(),
        );
        let mut profile = advantage_profile(
            mdp,
            policy,
            &traj,
            est.mode(),
            root.purpose(Purpose::QEstimate).child(key).seed(),
        )?;
        if profile.flat {
            return Ok(BufferEntry {
                reward: traj.terminal_reward,
                trajectory: traj,
                snapshot_id,
                flat_profile: true,
                train_from: 0,
            });
        }
        let mode = match gamma {
            Gamma::Infinite => SelectionMode::Argmax,
            Gamma::Finite(_) => SelectionMode::SoftmaxSample,
        };
        let m = profile.reselect(mode, gamma, &mut root.purpose(Purpose::Selection).child(key).stream())?;
        let st = traj.steps[m];
        let cont_seed = root.purpose(Purpose::Continuation).child(key).seed();
        let c = rollout_after(mdp, policy, st.h, st.state, st.action, cont_seed)?;
        let mut steps = traj.steps[..=m].to_vec();
        steps.extend(c.steps);
        let reward = prefix_return(mdp, &traj.steps[..m]) + c.return_to_go;
        Ok(BufferEntry {
            trajectory: Trajectory {
                question_id: q.id,
                steps,
                terminal_reward: reward,
                seed: cont_seed,
                origin: Origin::ResetContinuation { reset_index: m },
            },
            reward,
            snapshot_id,
            flat_profile: false,
            train_from: m,
        })
    });
    Ok(RolloutBuffer {
        capacity: n_trajectories,
        entries: entries.into_iter().collect::<Result<_, _>>()?,
    })
}

/// How the reset step of a preference pair is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResetStrategy {
    /// Critical step from the advantage profile (`γ = ∞` is argmax).
    Critical { estimates: EstimateSpec, gamma: Gamma },
    /// Uniformly random step.
    Random,
}

/// Pairs plus how the attempts went.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairCollection<T> {
    pub pairs: Vec<PreferencePair<T>>,
    pub attempts: usize,
    pub skipped_flat: usize,
    pub skipped_budget: usize,
}

enum Attempt<T> {
    Pair(PreferencePair<T>),
    Flat,
    Exhausted,
}

fn pair_attempt<T: Scalar>(
    pool: &QuestionPool<T>,
    policy: &SoftmaxPolicy<T>,
    strategy: ResetStrategy,
    est: &Estimator<'_, T>,
    budget: usize,
    root: SeedPath,
    j: usize,
) -> Result<Attempt<T>, DatagenError> {
    let mdp = &pool.mdp;
    let key = j as u64;
    let q = pool.draw(root, j);
    let traj = sample_trajectory_from(
        mdp,
        policy,
        q.id,
        q.start_state,
        root.purpose(Purpose::Trajectory).child(key).seed(),
    );
    let (m, source) = match strategy {
        ResetStrategy::Random => (
            root.purpose(Purpose::RandomReset).child(key).stream().below(traj.len()),
            PairSource::RandomReset,
        ),
        ResetStrategy::Critical { gamma, .. } => {
            let mut profile = advantage_profile(
                mdp,
                policy,
                &traj,
                est.mode(),
                root.purpose(Purpose::QEstimate).child(key).seed(),
            )?;
            if profile.flat {
                return Ok(Attempt::Flat);
            }
            let mode = match gamma {
                Gamma::Infinite => SelectionMode::Argmax,
                Gamma::Finite(_) => SelectionMode::SoftmaxSample,
            };
            let m = profile.reselect(mode, gamma, &mut root.purpose(Purpose::Selection).child(key).stream())?;
            (m, PairSource::Gpo)
        }
    };
    let st = traj.steps[m];
    let prefix = &traj.steps[..=m];
    let prefix_r = prefix_return(mdp, &traj.steps[..m]);
    let mut positive = None;
    let mut negative = None;
    for b in 0..budget {
        let cont_seed = root.purpose(Purpose::Continuation).child(key).child(b as u64).seed();
        let c = rollout_after(mdp, policy, st.h, st.state, st.action, cont_seed)?;
        let reward = prefix_r + c.return_to_go;
        let success = mdp.is_success(reward);
        let slot = if success { &mut positive } else { &mut negative };
        if slot.is_none() {
            let mut steps = prefix.to_vec();
            steps.extend(c.steps);
            let origin = if success {
                Origin::Positive { reset_index: Some(m) }
            } else {
                Origin::Negative { reset_index: Some(m) }
            };
            *slot = Some(Trajectory {
                question_id: q.id,
                steps,
                terminal_reward: reward,
                seed: cont_seed,
                origin,
            });
        }
        if positive.is_some() && negative.is_some() {
            break;
        }
    }
    match (positive, negative) {
        (Some(positive), Some(negative)) => Ok(Attempt::Pair(PreferencePair {
            question_id: q.id,
            positive,
            negative,
            critical_index: Some(m),
            shared_prefix_len: m + 1,
            source,
        })),
        _ => Ok(Attempt::Exhausted),
    }
}

/// Collects up to `n_pairs` pairs by resetting at a chosen step and sampling
/// up to `budget` continuations until one succeeds and one fails. Questions
/// that exhaust the budget (or have flat profiles) are skipped. At most
/// `max_attempts` trajectories are tried; attempts are processed in index
/// order, so the result does not depend on `workers`.
#[allow(clippy::too_many_arguments)]
pub fn collect_pairs<T: Scalar>(
    pool: &QuestionPool<T>,
    ref_policy: &SoftmaxPolicy<T>,
    n_pairs: usize,
    strategy: ResetStrategy,
    budget: usize,
    max_attempts: usize,
    seed: u64,
    workers: usize,
) -> Result<PairCollection<T>, DatagenError> {
    if pool.is_empty() {
        return Err(DatagenError::EmptyPool);
    }
    if budget < 2 {
        return Err(DatagenError::InvalidParameter(
            "budget must allow at least 2 continuations".into(),
        ));
    }
    if !pool.mdp.is_binary_terminal() {
        return Err(DatagenError::NonBinaryReward);
    }
    ref_policy.check_dims(&pool.mdp)?;
    let oracle = match strategy {
        ResetStrategy::Critical { estimates, .. } => oracle_if_exact(estimates, &pool.mdp, ref_policy)?,
        ResetStrategy::Random => None,
    };
    let est = match strategy {
        ResetStrategy::Critical { estimates, .. } => estimator(estimates, &oracle),
        ResetStrategy::Random => Estimator::MonteCarlo(1),
    };
    let root = SeedPath::new(seed);
    let mut out = PairCollection {
        pairs: Vec::with_capacity(n_pairs),
        ..Default::default()
    };
    let chunk = n_pairs.max(16);
    while out.pairs.len() < n_pairs && out.attempts < max_attempts {
        let start = out.attempts;
        let len = chunk.min(max_attempts - start);
        let results = map_indexed(workers, len, |i| {
            pair_attempt(pool, ref_policy, strategy, &est, budget, root, start + i)
        });
        for r in results {
            if out.pairs.len() == n_pairs {
                break;
            }
            out.attempts += 1;
            match r? {
                Attempt::Pair(p) => out.pairs.push(p),
                Attempt::Flat => out.skipped_flat += 1,
                Attempt::Exhausted => out.skipped_budget += 1,
            }
        }
    }
    Ok(out)
}

/// Pairs reset at the critical step of the reference policy's trajectories.
#[allow(clippy::too_many_arguments)]
pub fn collect_procedure_two<T: Scalar>(
    pool: &QuestionPool<T>,
    ref_policy: &SoftmaxPolicy<T>,
    n_pairs: usize,
    estimates: EstimateSpec,
    budget: usize,
    max_attempts: usize,
    seed: u64,
    workers: usize,
) -> Result<PairCollection<T>, DatagenError> {
    let strategy = ResetStrategy::Critical {
        estimates,
        gamma: Gamma::Infinite,
    };
    collect_pairs(pool, ref_policy, n_pairs, strategy, budget, max_attempts, seed, workers)
}

/// Same attempts as [`collect_procedure_two`] with the reset step drawn
/// uniformly.
#[allow(clippy::too_many_arguments)]
pub fn collect_random_reset<T: Scalar>(
    pool: &QuestionPool<T>,
    ref_policy: &SoftmaxPolicy<T>,
    n_pairs: usize,
    budget: usize,
    max_attempts: usize,
    seed: u64,
    workers: usize,
) -> Result<PairCollection<T>, DatagenError> {
    collect_pairs(
        pool,
        ref_policy,
        n_pairs,
        ResetStrategy::Random,
        budget,
        max_attempts,
        seed,
        workers,
    )
}

/// Splits every pair into a desirable positive and an undesirable negative.
pub fn kto_decompose<T: Scalar>(pairs: &[PreferencePair<T>]) -> Vec<KtoExample<T>> {
    pairs
        .iter()
        .flat_map(|p| {
            [
                KtoExample {
                    question_id: p.question_id,
                    trajectory: p.positive.clone(),
                    desirable: true,
                },
                KtoExample {
                    question_id: p.question_id,
                    trajectory: p.negative.clone(),
                    desirable: false,
                },
            ]
        })
        .collect()
}
