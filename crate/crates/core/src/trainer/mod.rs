//! Training loops with exact metrics: the online clipped policy-gradient
//! loop (plain or with critical-step resets), offline training on
//! preference or advantage-weighted datasets built once from the reference
//! policy, exact and sampled evaluation, parameter sweeps, and the numerical
//! check that per-step preference training recovers the advantage-tilted
//! policy.
//!
//! Every run starts from the uniform policy, which is also the reference
//! policy of the offline methods. Optimization is plain gradient
//! ascent/descent on the logits with a constant learning rate.

mod config;
mod eval;
mod metrics;
mod offline;
mod online;
mod sweep;
mod theorem;

use thiserror::Error;

use crate::advantage::AdvantageError;
use crate::datagen::{DatagenError, FilterReport};
use crate::mdp::{optimal_values, MdpError, SoftmaxPolicy, TabularMdp};
use crate::objectives::ObjectiveError;
use crate::scalar::Scalar;

pub use config::{BaselineKind, EnvSpec, Method, OfflineLoss, Pairing, TrainConfig};
pub use eval::{evaluate, EvalMode, Evaluation};
pub use metrics::{
    metrics_from_csv, metrics_to_csv, read_metrics_csv, write_metrics_csv, MetricsRecord, RegretTracker, CSV_COLUMNS,
};
pub use offline::{build_offline_dataset, offline_objective, train_offline, OfflineDataset};
pub use online::train_online;
pub use sweep::{sweep, SweepAxis, SweepRun, SweepSpec};
pub use theorem::{per_step_dpo_loss, verify_theorem2, Theorem2Options, Theorem2Report};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    MissingConfig { path: String, source: std::io::Error },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("report error: {0}")]
    Report(String),
    #[error("empty training dataset: {0}")]
    EmptyDataset(String),
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged {
        iteration: usize,
        reason: String,
        /// Rows recorded before the failure.
        history: Vec<MetricsRecord>,
        /// Logits of the last finite policy.
        last_good_logits: Vec<f64>,
    },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Advantage(#[from] AdvantageError),
}

/// Size and provenance of an offline dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetStats {
    pub filter: FilterReport,
    /// Items the loss is averaged over (pairs, tagged examples or weighted
    /// trajectories).
    pub items: usize,
    pub attempts: usize,
    pub skipped_flat: usize,
    pub skipped_budget: usize,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub history: Vec<MetricsRecord>,
    pub policy: SoftmaxPolicy<T>,
    /// Offline runs only.
    pub dataset: Option<DatasetStats>,
}

/// Runs the method named in `config` on `workers` threads. Results do not
/// depend on `workers`.
pub fn train<T: Scalar>(config: &TrainConfig, workers: usize) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if config.method.is_online() {
        train_online(config, workers)
    } else {
        train_offline(config, workers)
    }
}

/// Shared bookkeeping: exact evaluation after every update, regret and the
/// rows emitted at the evaluation cadence.
struct Recorder<'a, T> {
    mdp: &'a TabularMdp<T>,
    config: &'a TrainConfig,
    regret: RegretTracker,
    history: Vec<MetricsRecord>,
}

impl<'a, T: Scalar> Recorder<'a, T> {
    fn new(mdp: &'a TabularMdp<T>, config: &'a TrainConfig) -> Self {
        let optimal = optimal_values(mdp).initial_value(mdp).as_f64();
        Self {
            mdp,
            config,
            regret: RegretTracker::new(optimal),
            history: Vec::new(),
        }
    }

    fn record(&mut self, iteration: usize, policy: &SoftmaxPolicy<T>, loss: Option<f64>) -> Result<(), TrainError> {
        let e = evaluate(policy, self.mdp, EvalMode::Exact)?;
        let regret = self.regret.push(e.value);
        if iteration.is_multiple_of(self.config.eval_every) || iteration == self.config.iterations {
            self.history.push(MetricsRecord {
                iteration,
                method: self.config.method,
                gamma: self.config.gamma,
                mc_samples: self.config.mc_samples,
                seed: self.config.seed,
                value: e.value,
                success: e.success,
                regret,
                loss,
            });
        }
        Ok(())
    }

    fn diverged(self, iteration: usize, reason: impl Into<String>, last_good: &SoftmaxPolicy<T>) -> TrainError {
        TrainError::Diverged {
            iteration,
            reason: reason.into(),
            history: self.history,
            last_good_logits: last_good.logits().iter().map(|x| x.as_f64()).collect(),
        }
    }
}

/// `θ ← θ + lr · direction`; `Err` with a reason when the result is not finite.
fn step<T: Scalar>(policy: &mut SoftmaxPolicy<T>, direction: &[T], lr: T) -> Result<(), String> {
    let next: Vec<T> = policy
        .logits()
        .iter()
        .zip(direction)
        .map(|(&x, &d)| x + lr * d)
        .collect();
    if next.iter().any(|x| !x.is_finite()) {
        return Err("non-finite logits after update".into());
    }
    policy.set_logits(next).map_err(|e| e.to_string())
}
