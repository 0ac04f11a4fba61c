use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::advantage::Gamma;
use crate::datagen::{EstimateSpec, DEFAULT_BUDGET, DEFAULT_FILTER_SAMPLES, DEFAULT_FILTER_TEMPERATURE};
use crate::mdp::{bandit, pivotal_chain, TabularMdp};
use crate::objectives::{KtoRefPoint, ObjectiveParams};
use crate::scalar::Scalar;

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    PivotalChain {
        horizon: usize,
        num_actions: usize,
        pivotal_index: usize,
        q_base: f64,
    },
    Bandit {
        rewards: Vec<f64>,
    },
    /// A `.mdp.json` document; relative paths resolve against the working
    /// directory.
    File {
        path: PathBuf,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::PivotalChain {
            horizon: 6,
            num_actions: 4,
            pivotal_index: 2,
            q_base: 0.2,
        }
    }
}

impl EnvSpec {
    /// Builds the environment and returns it with the bytes that define it:
    /// the file contents for `File`, the canonical JSON otherwise.
    pub fn build<T: Scalar>(&self) -> Result<(TabularMdp<T>, Vec<u8>), TrainError> {
        let mdp = match self {
            EnvSpec::PivotalChain {
                horizon,
                num_actions,
                pivotal_index,
                q_base,
            } => pivotal_chain(*horizon, *num_actions, *pivotal_index, *q_base)?,
            EnvSpec::Bandit { rewards } => {
                let r: Vec<T> = rewards.iter().map(|&x| T::lit(x)).collect();
                bandit(&r)?
            }
            EnvSpec::File { path } => {
                let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let text = String::from_utf8_lossy(&bytes);
                return Ok((TabularMdp::from_json(&text)?, bytes));
            }
        };
        let bytes = mdp.to_json().into_bytes();
        Ok((mdp, bytes))
    }
}

/// Training method. `gpo_*` variants build their data by resetting at the
/// critical step; the others are the corresponding baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GpoPpo,
    Ppo,
    GpoDpo,
    Dpo,
    GpoKto,
    Kto,
    GpoSimpo,
    Simpo,
    GpoOrpo,
    Orpo,
    AdvSft,
}

/// Loss optimized by an offline method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineLoss {
    Dpo,
    Kto,
    Simpo,
    Orpo,
    AdvSft,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::GpoPpo,
        Method::Ppo,
        Method::GpoDpo,
        Method::Dpo,
        Method::GpoKto,
        Method::Kto,
        Method::GpoSimpo,
        Method::Simpo,
        Method::GpoOrpo,
        Method::Orpo,
        Method::AdvSft,
    ];

    pub fn is_online(self) -> bool {
        matches!(self, Method::GpoPpo | Method::Ppo)
    }

    pub fn is_gpo(self) -> bool {
        matches!(
            self,
            Method::GpoPpo | Method::GpoDpo | Method::GpoKto | Method::GpoSimpo | Method::GpoOrpo
        )
    }

    /// `None` for the online methods.
    pub fn offline_loss(self) -> Option<OfflineLoss> {
        match self {
            Method::GpoPpo | Method::Ppo => None,
            Method::GpoDpo | Method::Dpo => Some(OfflineLoss::Dpo),
            Method::GpoKto | Method::Kto => Some(OfflineLoss::Kto),
            Method::GpoSimpo | Method::Simpo => Some(OfflineLoss::Simpo),
            Method::GpoOrpo | Method::Orpo => Some(OfflineLoss::Orpo),
            Method::AdvSft => Some(OfflineLoss::AdvSft),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::GpoPpo => "gpo_ppo",
            Method::Ppo => "ppo",
            Method::GpoDpo => "gpo_dpo",
            Method::Dpo => "dpo",
            Method::GpoKto => "gpo_kto",
            Method::Kto => "kto",
            Method::GpoSimpo => "gpo_simpo",
            Method::Simpo => "simpo",
            Method::GpoOrpo => "gpo_orpo",
            Method::Orpo => "orpo",
            Method::AdvSft => "adv_sft",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown method {s:?}")))
    }
}

/// How offline preference pairs are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Reset at the critical step of each reference trajectory.
    Critical,
    /// Reset at a uniformly random step.
    Random,
    /// First success and first failure among each question's filter samples.
    WholeTrajectory,
}

/// State-value baseline for the clipped objective's advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Exact `Q − V` of the collecting policy.
    Oracle,
    /// Return-to-go minus a tabular `V̂` fitted on an independent batch of
    /// plain rollouts from the collecting policy.
    Empirical,
}

/// Full description of a training run. Every field has a default, so `{}`
/// is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub method: Method,
    /// Training iterations `T`.
    pub iterations: usize,
    /// Trajectories per online collection, or preference pairs / weighted
    /// trajectories in an offline dataset.
    pub batch_size: usize,
    /// Size of the question pool before filtering.
    pub questions: usize,
    pub learning_rate: f64,
    /// Gradient steps per collected online buffer.
    pub updates_per_batch: usize,
    /// Monte-Carlo continuations per step for advantage profiles.
    pub mc_samples: usize,
    /// Use exact advantages of the collecting policy instead of Monte Carlo.
    pub exact_advantages: bool,
    pub gamma: Gamma,
    /// Continuations tried per question when building a pair.
    pub budget: usize,
    /// Trajectories tried before pair collection gives up.
    pub max_attempts: usize,
    pub filter_samples: usize,
    pub filter_temperature: f64,
    /// Overrides the pairing implied by the method (critical for `gpo_*`,
    /// whole-trajectory otherwise).
    pub pairing: Option<Pairing>,
    pub baseline: BaselineKind,
    pub clip_eps: f64,
    pub beta: f64,
    pub simpo_margin: f64,
    pub orpo_lambda: f64,
    pub kto_lambda_d: f64,
    pub kto_lambda_u: f64,
    pub kto_ref_point: KtoRefPoint,
    pub seed: u64,
    /// A metrics row is emitted every `eval_every` iterations and at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let p = ObjectiveParams::default();
        Self {
            env: EnvSpec::default(),
            method: Method::GpoPpo,
            iterations: 50,
            batch_size: 32,
            questions: 64,
            learning_rate: 0.1,
            updates_per_batch: 4,
            mc_samples: 4,
            exact_advantages: false,
            gamma: Gamma::Infinite,
            budget: DEFAULT_BUDGET,
            max_attempts: 1024,
            filter_samples: DEFAULT_FILTER_SAMPLES,
            filter_temperature: DEFAULT_FILTER_TEMPERATURE,
            pairing: None,
            baseline: BaselineKind::Empirical,
            clip_eps: p.clip_eps,
            beta: p.beta,
            simpo_margin: p.simpo_margin,
            orpo_lambda: p.orpo_lambda,
            kto_lambda_d: p.kto_lambda_d,
            kto_lambda_u: p.kto_lambda_u,
            kto_ref_point: p.kto_ref_point,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    /// Parses JSON, rejecting unknown keys with their path, then validates.
    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            TrainError::Config(if path == "." {
                e.into_inner().to_string()
            } else {
                format!("{path}: {}", e.into_inner())
            })
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::MissingConfig {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Pretty JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn objective_params(&self) -> ObjectiveParams {
        ObjectiveParams {
            clip_eps: self.clip_eps,
            beta: self.beta,
            simpo_margin: self.simpo_margin,
            orpo_lambda: self.orpo_lambda,
            kto_lambda_d: self.kto_lambda_d,
            kto_lambda_u: self.kto_lambda_u,
            kto_ref_point: self.kto_ref_point,
        }
    }

    pub fn estimates(&self) -> EstimateSpec {
        if self.exact_advantages {
            EstimateSpec::Exact
        } else {
            EstimateSpec::MonteCarlo {
                n_samples: self.mc_samples,
            }
        }
    }

    /// Pairing actually used by an offline preference method.
    pub fn effective_pairing(&self) -> Pairing {
        self.pairing.unwrap_or(if self.method.is_gpo() {
            Pairing::Critical
        } else {
            Pairing::WholeTrajectory
        })
    }

    /// Checks ranges and method/parameter compatibility.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        self.objective_params()
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        for (name, v) in [
            ("iterations", self.iterations),
            ("batch_size", self.batch_size),
            ("questions", self.questions),
            ("updates_per_batch", self.updates_per_batch),
            ("mc_samples", self.mc_samples),
            ("max_attempts", self.max_attempts),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative".into());
        }
        if self.budget < 2 {
            return bad("budget must allow at least 2 continuations".into());
        }
        if self.filter_samples < 2 {
            return bad("filter_samples must be at least 2".into());
        }
        if !(self.filter_temperature > 0.0 && self.filter_temperature.is_finite()) {
            return bad("filter_temperature must be positive".into());
        }
        if self.pairing.is_some() && matches!(self.method.offline_loss(), None | Some(OfflineLoss::AdvSft)) {
            return bad(format!("pairing does not apply to method {}", self.method));
        }
        if let EnvSpec::Bandit { rewards } = &self.env {
            if rewards.is_empty() {
                return bad("bandit needs at least one reward".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let c = TrainConfig::from_json("{}").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!((c.clip_eps, c.beta, c.simpo_margin), (0.2, 0.1, 0.5));
        assert_eq!((c.kto_lambda_d, c.kto_lambda_u, c.mc_samples), (1.0, 1.0, 4));
    }

    #[test]
    fn bad_clip_names_the_range() {
        let e = TrainConfig::from_json(r#"{"clip_eps": 1.5}"#).unwrap_err();
        assert!(e.to_string().contains("(0, 1)"), "{e}");
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let e = TrainConfig::from_json(r#"{"env": {"kind": "pivotal_chain", "horizon": 3, "num_actions": 2, "pivotal_index": 0, "q_base": 0.0, "extra": 1}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("env: unknown field `extra`"), "{e}");
        let e = TrainConfig::from_json(r#"{"learning_rte": 0.1}"#).unwrap_err();
        assert!(e.to_string().contains("learning_rte"), "{e}");
    }

    #[test]
    fn echo_round_trips() {
        let c = TrainConfig {
            method: Method::GpoKto,
            gamma: Gamma::Finite(2.0),
            kto_ref_point: KtoRefPoint::Constant(0.0),
            pairing: Some(Pairing::Random),
            ..Default::default()
        };
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
        let inf = TrainConfig::from_json(r#"{"gamma": "inf"}"#).unwrap();
        assert_eq!(inf.gamma, Gamma::Infinite);
    }

    #[test]
    fn incompatible_pairing_rejected() {
        assert!(TrainConfig::from_json(r#"{"method": "ppo", "pairing": "random"}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"method": "dpo", "pairing": "random"}"#).is_ok());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
