//! Run manifests, report emission and reproducible re-runs.
//!
//! A run writes `metrics.csv`, `summary.txt`, `manifest.json` and, for a
//! single training run, `policy.json` into its output directory. The manifest
//! holds the resolved configuration, the master seed and where it came from,
//! a git-style SHA-256 of the bytes that define the environment, and a hash
//! inventory of the other outputs. Re-running a manifest reproduces the metrics CSV
//! byte for byte; only the timestamps differ.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::write_atomic;
use crate::trainer::{metrics_to_csv, sweep, train, MetricsRecord, SweepRun, SweepSpec, TrainConfig, TrainError};

pub const TOOL_NAME: &str = "gpo";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable that overrides the configured master seed.
pub const SEED_ENV_VAR: &str = "GPO_SEED";

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const POLICY_FILE: &str = "policy.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid manifest {path}: {msg}")]
    Manifest { path: String, msg: String },
    #[error("environment hash mismatch: manifest has {expected}, current bytes hash to {actual}")]
    EnvHashMismatch { expected: String, actual: String },
    #[error("{SEED_ENV_VAR}={0:?} is not an unsigned integer")]
    BadSeed(String),
    #[error("cannot report on an empty history")]
    EmptyHistory,
}

fn hex(digest: &[u8]) -> String {
    digest.iter().fold(String::with_capacity(2 * digest.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Lower-case hex SHA-256 of `bytes`, as printed by `sha256sum`.
pub fn content_hash(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Git object id of `bytes` as a blob in a SHA-256 repository: the SHA-256
/// of `"blob <len>\0"` followed by the bytes, as printed by
/// `git hash-object` there.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex(&h.finalize())
}

/// Where the master seed of a run came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Config,
    /// The `--seed` command-line flag.
    Flag,
    /// The `GPO_SEED` environment variable.
    Environment,
}

/// Picks the master seed: an explicit flag wins over `GPO_SEED`, which wins
/// over the configuration.
pub fn resolve_seed(
    config_seed: u64,
    flag: Option<u64>,
    env: Option<&str>,
) -> Result<(u64, SeedSource), ExperimentError> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Some(v) = env {
        let s = v.trim().parse().map_err(|_| ExperimentError::BadSeed(v.to_string()))?;
        return Ok((s, SeedSource::Environment));
    }
    Ok((config_seed, SeedSource::Config))
}

/// What a manifest re-runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunKind {
    Train,
    Sweep { spec: SweepSpec },
}

/// One file written by a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    /// File name relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to repeat a run, plus what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub run: RunKind,
    /// Fully resolved configuration; its `seed` is the master seed.
    pub config: TrainConfig,
    pub seed_source: SeedSource,
    /// [`git_blob_hash`] of the environment file, or of the canonical JSON
    /// of a built-in environment.
    pub env_hash: String,
    /// Unix seconds; excluded from reproducibility.
    pub started_at: u64,
    pub finished_at: u64,
    /// Outputs other than the manifest itself, sorted by path.
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|msg| ExperimentError::Manifest {
            path: path.display().to_string(),
            msg,
        })
    }

    /// Checks that the environment still hashes to the recorded value.
    pub fn verify_env(&self) -> Result<(), ExperimentError> {
        let (_, bytes) = self.config.env.build::<f64>()?;
        let actual = git_blob_hash(&bytes);
        if actual != self.env_hash {
            return Err(ExperimentError::EnvHashMismatch {
                expected: self.env_hash.clone(),
                actual,
            });
        }
        Ok(())
    }

    /// Outputs in `dir` whose hash no longer matches the inventory.
    pub fn stale_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| {
                std::fs::read(dir.join(&o.path))
                    .map(|b| content_hash(&b) != o.sha256)
                    .unwrap_or(true)
            })
            .map(|o| o.path.clone())
            .collect()
    }
}

/// Report flavours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    /// Fixed column order, header first.
    Csv,
    /// Final value, final regret and best success, plus deltas for sweeps.
    Summary,
}

/// Aggregate of the runs sharing one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub runs: usize,
    /// Means over runs of the last recorded row.
    pub final_value: f64,
    pub final_regret: f64,
    /// Mean over runs of the best recorded success probability.
    pub best_success: Option<f64>,
}

/// `later − earlier` for two summary rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub earlier: String,
    pub later: String,
    pub final_value: f64,
    pub final_regret: f64,
    pub best_success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// One row per ordered pair of labels `(i < j)`; empty for a single run.
    pub deltas: Vec<DeltaRow>,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"))
}

impl Summary {
    /// Plain-text rendering with one line per row.
    pub fn render(&self) -> String {
        let mut s = String::from("label,runs,final_value,final_regret,best_success\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{}",
                r.label,
                r.runs,
                r.final_value,
                r.final_regret,
                fmt_opt(r.best_success)
            );
        }
        for d in &self.deltas {
            let _ = writeln!(
                s,
                "delta {} - {},,{:+.6},{:+.6},{}",
                d.later,
                d.earlier,
                d.final_value,
                d.final_regret,
                d.best_success.map_or_else(|| "n/a".to_string(), |v| format!("{v:+.6}"))
            );
        }
        s
    }
}

fn summarize_groups(groups: Vec<(String, Vec<&[MetricsRecord]>)>) -> Result<Summary, ExperimentError> {
    let mut rows = Vec::with_capacity(groups.len());
    for (label, histories) in groups {
        let n = histories.len() as f64;
        let mut value = 0.0;
        let mut regret = 0.0;
        let mut best = Some(0.0);
        for h in &histories {
            let last = h.last().ok_or(ExperimentError::EmptyHistory)?;
            value += last.value;
            regret += last.regret;
            let b = h.iter().filter_map(|r| r.success).reduce(f64::max);
            best = best.zip(b).map(|(acc, x)| acc + x);
        }
        rows.push(SummaryRow {
            label,
            runs: histories.len(),
            final_value: value / n,
            final_regret: regret / n,
            best_success: best.map(|b| b / n),
        });
    }
    let mut deltas = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (&rows[i], &rows[j]);
            deltas.push(DeltaRow {
                earlier: a.label.clone(),
                later: b.label.clone(),
                final_value: b.final_value - a.final_value,
                final_regret: b.final_regret - a.final_regret,
                best_success: a.best_success.zip(b.best_success).map(|(x, y)| y - x),
            });
        }
    }
    Ok(Summary { rows, deltas })
}

/// Summary of a single run, labelled by its method.
pub fn summarize(history: &[MetricsRecord]) -> Result<Summary, ExperimentError> {
    let first = history.first().ok_or(ExperimentError::EmptyHistory)?;
    summarize_groups(vec![(first.method.to_string(), vec![history])])
}

/// Summary of a sweep: one row per swept value (averaged over seeds) and the
/// pairwise deltas between values.
pub fn summarize_sweep(runs: &[SweepRun]) -> Result<Summary, ExperimentError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&[MetricsRecord]>> = BTreeMap::new();
    for r in runs {
        if !groups.contains_key(&r.value) {
            order.push(r.value.clone());
        }
        groups.entry(r.value.clone()).or_default().push(&r.history);
    }
    if order.is_empty() {
        return Err(ExperimentError::EmptyHistory);
    }
    let groups = order
        .into_iter()
        .map(|v| {
            let h = groups.remove(&v).unwrap_or_default();
            (v, h)
        })
        .collect();
    summarize_groups(groups)
}

/// Renders a single run's history.
pub fn emit_report(history: &[MetricsRecord], format: ReportFormat) -> Result<String, ExperimentError> {
    if history.is_empty() {
        return Err(ExperimentError::EmptyHistory);
    }
    match format {
        ReportFormat::Csv => Ok(metrics_to_csv(history)?),
        ReportFormat::Summary => Ok(summarize(history)?.render()),
    }
}

/// Renders a sweep: long-format CSV over all runs in sweep order, or the
/// per-value summary with deltas.
pub fn emit_sweep_report(runs: &[SweepRun], format: ReportFormat) -> Result<String, ExperimentError> {
    match format {
        ReportFormat::Csv => {
            let all: Vec<MetricsRecord> = runs.iter().flat_map(|r| r.history.iter().cloned()).collect();
            if all.is_empty() {
                return Err(ExperimentError::EmptyHistory);
            }
            Ok(metrics_to_csv(&all)?)
        }
        ReportFormat::Summary => Ok(summarize_sweep(runs)?.render()),
    }
}

/// In-memory result of a run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: RunManifest,
    /// `(file name, contents)` in inventory order.
    pub files: Vec<(String, Vec<u8>)>,
}

impl RunArtifacts {
    pub fn file(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file and then the manifest into `dir`, creating it if
    /// needed. Returns the paths written.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let io = |path: &Path| {
            let p = path.display().to_string();
            move |source| ExperimentError::Io { path: p, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            write_atomic(&p, bytes).map_err(io(&p))?;
            written.push(p);
        }
        let p = dir.join(MANIFEST_FILE);
        write_atomic(&p, self.manifest.to_json().as_bytes()).map_err(io(&p))?;
        written.push(p);
        Ok(written)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Runs `kind` with a resolved `config` and collects its outputs. The
/// configuration is validated and the environment hashed before training.
pub fn execute(
    kind: &RunKind,
    config: &TrainConfig,
    seed_source: SeedSource,
    workers: usize,
) -> Result<RunArtifacts, ExperimentError> {
    config.validate()?;
    let (_, env_bytes) = config.env.build::<f64>()?;
    let started_at = unix_now();
    let mut files = Vec::new();
    match kind {
        RunKind::Train => {
            let out = train::<f64>(config, workers)?;
            files.push((
                METRICS_FILE.to_string(),
                emit_report(&out.history, ReportFormat::Csv)?.into_bytes(),
            ));
            let policy = serde_json::to_string_pretty(&out.policy).expect("policy serializes") + "\n";
            files.push((POLICY_FILE.to_string(), policy.into_bytes()));
            files.push((
                SUMMARY_FILE.to_string(),
                emit_report(&out.history, ReportFormat::Summary)?.into_bytes(),
            ));
        }
        RunKind::Sweep { spec } => {
            let runs = sweep(config, spec, workers)?;
            files.push((
                METRICS_FILE.to_string(),
                emit_sweep_report(&runs, ReportFormat::Csv)?.into_bytes(),
            ));
            files.push((
                SUMMARY_FILE.to_string(),
                emit_sweep_report(&runs, ReportFormat::Summary)?.into_bytes(),
            ));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let outputs = files
        .iter()
        .map(|(name, bytes)| OutputFile {
            path: name.clone(),
            sha256: content_hash(bytes),
            bytes: bytes.len() as u64,
        })
        .collect();
    Ok(RunArtifacts {
        manifest: RunManifest {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            run: kind.clone(),
            config: config.clone(),
            seed_source,
            env_hash: git_blob_hash(&env_bytes),
            started_at,
            finished_at: unix_now(),
            outputs,
        },
        files,
    })
}

/// Repeats the run a manifest describes after checking the environment hash.
pub fn rerun(manifest: &RunManifest, workers: usize) -> Result<RunArtifacts, ExperimentError> {
    manifest.verify_env()?;
    execute(&manifest.run, &manifest.config, manifest.seed_source, workers)
}
