use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train, MetricsRecord, TrainConfig, TrainError};
use crate::advantage::Gamma;

/// Configuration field varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Gamma,
    McSamples,
    Method,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::McSamples => "mc_samples",
            SweepAxis::Method => "method",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "mc_samples" => Ok(SweepAxis::McSamples),
            "method" => Ok(SweepAxis::Method),
            other => Err(TrainError::Config(format!(
                "unknown sweep axis {other:?} (expected gamma, mc_samples or method)"
            ))),
        }
    }
}

/// Values of one axis, each run once per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    /// Seeds shared by every value; empty means the template's seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    /// One configuration per `(value, seed)`, value-major.
    pub fn expand(&self, template: &TrainConfig) -> Result<Vec<(String, TrainConfig)>, TrainError> {
        if self.values.is_empty() {
            return Err(TrainError::Config("sweep needs at least one value".into()));
        }
        let seeds = if self.seeds.is_empty() {
            vec![template.seed]
        } else {
            self.seeds.clone()
        };
        let mut out = Vec::with_capacity(self.values.len() * seeds.len());
        for v in &self.values {
            let mut cfg = template.clone();
            match self.axis {
                SweepAxis::Gamma => cfg.gamma = v.parse::<Gamma>()?,
                SweepAxis::McSamples => {
                    cfg.mc_samples = v
                        .parse()
                        .map_err(|_| TrainError::Config(format!("mc_samples value {v:?} is not a count")))?
                }
                SweepAxis::Method => cfg.method = v.parse()?,
            }
            cfg.validate()?;
            for &seed in &seeds {
                out.push((v.clone(), TrainConfig { seed, ..cfg.clone() }));
            }
        }
        Ok(out)
    }
}

/// One finished run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub value: String,
    pub config: TrainConfig,
    pub history: Vec<MetricsRecord>,
}

/// Trains every `(value, seed)` combination in order. The first failing run
/// aborts the sweep.
pub fn sweep(template: &TrainConfig, spec: &SweepSpec, workers: usize) -> Result<Vec<SweepRun>, TrainError> {
    spec.expand(template)?
        .into_iter()
        .map(|(value, config)| {
            let out = train::<f64>(&config, workers)?;
            Ok(SweepRun {
                value,
                config,
                history: out.history,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Method;

    #[test]
    fn expansion_is_value_major_with_shared_seeds() {
        let spec = SweepSpec {
            axis: SweepAxis::Gamma,
            values: vec!["0.5".into(), "inf".into()],
            seeds: vec![3, 4],
        };
        let runs = spec.expand(&TrainConfig::default()).unwrap();
        let keys: Vec<_> = runs.iter().map(|(v, c)| (v.as_str(), c.seed, c.gamma)).collect();
        assert_eq!(
            keys,
            vec![
                ("0.5", 3, Gamma::Finite(0.5)),
                ("0.5", 4, Gamma::Finite(0.5)),
                ("inf", 3, Gamma::Infinite),
                ("inf", 4, Gamma::Infinite)
            ]
        );
    }

    #[test]
    fn bad_values_rejected() {
        let spec = SweepSpec {
            axis: SweepAxis::Method,
            values: vec!["sft".into()],
            seeds: vec![],
        };
        assert!(spec.expand(&TrainConfig::default()).is_err());
        assert!("temperature".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn method_sweep_runs_both() {
        let template = TrainConfig {
            iterations: 2,
            batch_size: 4,
            questions: 8,
            ..Default::default()
        };
        let spec = SweepSpec {
            axis: SweepAxis::Method,
            values: vec!["dpo".into(), "gpo_dpo".into()],
            seeds: vec![],
        };
        let runs = sweep(&template, &spec, 1).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].history[0].method, Method::Dpo);
        assert_eq!(runs[1].history[0].method, Method::GpoDpo);
    }
}
