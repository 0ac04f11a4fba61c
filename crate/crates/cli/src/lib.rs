//! Command-line front end: argument parsing, exit codes and the glue between
//! files on disk and the `gpo-core` library.
//!
//! Every failure prints one JSON object on a single stderr line,
//! `{"error": kind, "exit_code": n, "message": text}`, and returns a
//! distinct exit code:
//!
//! | code | kind |
//! |------|------|
//! | 0 | success |
//! | 2 | `config`: invalid or missing configuration, manifest or seed |
//! | 3 | `runtime`: divergence, empty dataset or unconverged verification |
//! | 4 | `io`: unreadable input or unwritable output |
//! | 64 | `usage`: unknown subcommand or flag, bad flag value |

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gpo_core::advantage::{advantage_profile, AdvantageMode, Gamma, SelectionMode};
use gpo_core::datagen::{collect_plain, collect_procedure_one, QuestionPool};
use gpo_core::experiment::{
    execute, rerun, resolve_seed, ExperimentError, RunArtifacts, RunKind, RunManifest, SeedSource, SEED_ENV_VAR,
};
use gpo_core::mdp::{backward_induction, optimal_values, sample_trajectory, OracleValues, SoftmaxPolicy, TabularMdp};
use gpo_core::rng::{Purpose, SeedPath};
use gpo_core::trainer::{
    build_offline_dataset, evaluate, verify_theorem2, EvalMode, Method, OfflineDataset, Pairing, SweepAxis, SweepSpec,
    Theorem2Options, TrainConfig, TrainError,
};
use gpo_core::trajectory::{segment_text, Record, SegmentParams, DEFAULT_MIN_WORDS, MAX_STEPS_OFFLINE};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_USAGE: i32 = 64;

/// A failure with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
            CliError::Io(_) => "io",
        }
    }

    /// The single stderr line describing this error.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) | TrainError::MissingConfig { .. } => CliError::Config(e.to_string()),
            TrainError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Train(t) => t.into(),
            ExperimentError::Io { .. } => CliError::Io(e.to_string()),
            ExperimentError::Manifest { .. }
            | ExperimentError::EnvHashMismatch { .. }
            | ExperimentError::BadSeed(_) => CliError::Config(e.to_string()),
            ExperimentError::EmptyHistory => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gpo",
    version,
    about = "Critical-step guided policy optimization on tabular MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split a reasoning trace from stdin (or --input) into steps, printed
    /// one per line as `step k: text` with `\n` and `\\` escaped.
    Segment(SegmentArgs),
    /// Print exact values of a policy and the optimal initial value.
    Oracle(OracleArgs),
    /// Sample trajectories and print them with their advantage profiles.
    Profile(ProfileArgs),
    /// Build the training data of the configured method as JSONL records.
    Collect(CollectArgs),
    /// Train one configuration and write metrics, policy, summary and manifest.
    Train(TrainArgs),
    /// Train one configuration per value of an axis.
    Sweep(SweepArgs),
    /// Check that per-step preference training recovers the tilted policy.
    #[command(name = "verify-theorem2")]
    VerifyTheorem2(TheoremArgs),
    /// Evaluate a saved policy exactly or by sampling.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Lines with fewer words are merged into a neighbouring step.
    #[arg(long, default_value_t = DEFAULT_MIN_WORDS)]
    min_words: usize,
    /// Steps beyond this count are concatenated into the last step.
    #[arg(long, default_value_t = MAX_STEPS_OFFLINE)]
    max_steps: usize,
    /// Read the trace from this file instead of stdin.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON configuration; `{}` gives every default.
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the configuration and GPO_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policy JSON; the uniform policy when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policy JSON; the uniform policy when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Number of trajectories to sample.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Use exact values instead of `mc_samples` rollouts.
    #[arg(long)]
    exact: bool,
    /// Output format.
    #[arg(long, value_enum, default_value_t = ProfileFormat::Table)]
    format: ProfileFormat,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileFormat {
    /// One CSV row per step: index, estimate, advantage, chosen flag.
    Table,
    /// Trajectory and profile records.
    Jsonl,
}

#[derive(Debug, Args)]
struct CollectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Collection procedure; derived from the configured method when absent.
    #[arg(long, value_enum)]
    procedure: Option<Procedure>,
    /// Monte-Carlo continuations per step, overriding the configuration.
    #[arg(long)]
    mc_samples: Option<usize>,
    /// Reset temperature: a positive number or `inf`.
    #[arg(long)]
    gamma: Option<Gamma>,
    /// Continuations tried per reset before a question is skipped.
    #[arg(long)]
    budget: Option<usize>,
    /// Write the records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the output does not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Procedure {
    /// Rollouts reset at the critical step.
    One,
    /// Preference pairs reset at the critical step.
    Two,
    /// Preference pairs reset at a uniformly drawn step.
    Random,
    /// Rollouts without resets.
    Plain,
    /// Pairs of whole trajectories from the filter samples.
    Whole,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON configuration; required unless --manifest is given.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration and GPO_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Repeat the run recorded in this manifest.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; the output does not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// gamma, mc_samples or method.
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values of the axis.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
    /// Comma-separated seeds shared by every value.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Debug, Args)]
struct TheoremArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Defaults to the configured beta.
    #[arg(long)]
    beta: Option<f64>,
    /// Gradient-step budget before the check gives up.
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Policy JSON to evaluate.
    #[arg(long)]
    policy: PathBuf,
    /// Sample this many episodes instead of evaluating exactly.
    #[arg(long)]
    mc: Option<usize>,
}

/// Streams and environment a command runs against.
pub struct Context<'a> {
    pub stdin: &'a mut dyn Read,
    pub stdout: &'a mut dyn Write,
    /// Value of `GPO_SEED`, if set.
    pub env_seed: Option<String>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors go to `stderr` as one JSON line.
pub fn cli_main<I, S>(args: I, ctx: &mut Context<'_>, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(ctx.stdout, "{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            let err = CliError::Usage(first.to_string());
            let _ = writeln!(stderr, "{}", err.to_json_line());
            return err.exit_code();
        }
    };
    match run(cli.command, ctx) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json_line());
            e.exit_code()
        }
    }
}

/// Entry point for the binary: process arguments, standard streams and the
/// `GPO_SEED` variable.
pub fn main_from_env() -> i32 {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut ctx = Context {
        stdin: &mut stdin.lock(),
        stdout: &mut stdout.lock(),
        env_seed: std::env::var(SEED_ENV_VAR).ok(),
    };
    cli_main(std::env::args_os(), &mut ctx, &mut std::io::stderr())
}

fn run(command: Command, ctx: &mut Context<'_>) -> Result<(), CliError> {
    match command {
        Command::Segment(a) => segment(a, ctx),
        Command::Oracle(a) => oracle(a, ctx),
        Command::Profile(a) => profile(a, ctx),
        Command::Collect(a) => collect(a, ctx),
        Command::Train(a) => train_or_sweep(a.run, None, ctx),
        Command::Sweep(a) => {
            let spec = match (&a.run.manifest, a.axis) {
                (Some(_), None) => None,
                (Some(_), Some(_)) => return Err(CliError::Usage("--axis cannot be combined with --manifest".into())),
                (None, None) => return Err(CliError::Usage("sweep needs --axis".into())),
                (None, Some(axis)) => Some(SweepSpec {
                    axis: axis.parse::<SweepAxis>().map_err(|e| CliError::Usage(e.to_string()))?,
                    values: a.values,
                    seeds: a.seeds,
                }),
            };
            train_or_sweep(a.run, Some(spec), ctx)
        }
        Command::VerifyTheorem2(a) => theorem(a, ctx),
        Command::Eval(a) => eval(a, ctx),
    }
}

/// Escapes a step so it fits on one line.
pub fn escape_step(step: &str) -> String {
    step.replace('\\', "\\\\").replace('\n', "\\n")
}

fn read_input(path: Option<&Path>, stdin: &mut dyn Read) -> Result<String, CliError> {
    let mut bytes = Vec::new();
    match path {
        Some(p) => bytes = std::fs::read(p).map_err(|e| io_error(p, e))?,
        None => {
            stdin
                .read_to_end(&mut bytes)
                .map_err(|e| CliError::Io(format!("stdin: {e}")))?;
        }
    }
    String::from_utf8(bytes).map_err(|_| CliError::Io("input is not valid UTF-8".into()))
}

fn segment(a: SegmentArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let text = read_input(a.input.as_deref(), ctx.stdin)?;
    let trace = segment_text(
        &text,
        SegmentParams {
            max_steps: a.max_steps,
            min_words: a.min_words,
        },
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = String::new();
    for (k, s) in trace.steps.iter().enumerate() {
        out.push_str(&format!("step {}: {}\n", k + 1, escape_step(s)));
    }
    emit(ctx, None, out.as_bytes())
}

/// Loads a configuration and applies the seed precedence.
fn load_config(a: &ConfigArgs, env_seed: Option<&str>) -> Result<(TrainConfig, SeedSource), CliError> {
    let mut config = TrainConfig::load(&a.config)?;
    let (seed, source) = resolve_seed(config.seed, a.seed, env_seed)?;
    config.seed = seed;
    config.validate()?;
    Ok((config, source))
}

fn build_env(config: &TrainConfig) -> Result<TabularMdp<f64>, CliError> {
    match config.env.build::<f64>() {
        Ok((m, _)) => Ok(m),
        Err(TrainError::Io { path, source }) => Err(CliError::Io(format!("{path}: {source}"))),
        Err(e) => Err(CliError::Config(format!("invalid environment: {e}"))),
    }
}

fn load_policy(path: Option<&Path>, mdp: &TabularMdp<f64>) -> Result<SoftmaxPolicy<f64>, CliError> {
    let Some(p) = path else {
        return Ok(SoftmaxPolicy::uniform_for(mdp));
    };
    let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
    let policy: SoftmaxPolicy<f64> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid policy {}: {e}", p.display())))?;
    policy
        .check_dims(mdp)
        .map_err(|e| CliError::Config(format!("policy {} does not fit the environment: {e}", p.display())))?;
    Ok(policy)
}

/// Writes `bytes` to `out` when given, otherwise to stdout.
fn emit(ctx: &mut Context<'_>, out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => gpo_core::io::write_atomic(p, bytes).map_err(|e| io_error(p, e)),
        None => ctx
            .stdout
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn table_json(oracle: &OracleValues<f64>) -> serde_json::Value {
    let (hz, ns, na) = (oracle.horizon(), oracle.num_states(), oracle.num_actions());
    let v: Vec<Vec<f64>> = (0..hz).map(|h| (0..ns).map(|s| oracle.v(h, s)).collect()).collect();
    let q: Vec<Vec<Vec<f64>>> = (0..hz)
        .map(|h| (0..ns).map(|s| (0..na).map(|a| oracle.q(h, s, a)).collect()).collect())
        .collect();
    serde_json::json!({ "v": v, "q": q })
}

fn oracle(a: OracleArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let (config, _) = load_config(&a.cfg, ctx.env_seed.as_deref())?;
    let mdp = build_env(&config)?;
    let policy = load_policy(a.policy.as_deref(), &mdp)?;
    let o = backward_induction(&mdp, &policy).map_err(|e| CliError::Runtime(e.to_string()))?;
    let opt = optimal_values(&mdp);
    let tables = table_json(&o);
    let doc = serde_json::json!({
        "horizon": mdp.horizon(),
        "num_states": mdp.num_states(),
        "num_actions": mdp.num_actions(),
        "initial_value": o.initial_value(&mdp),
        "optimal_initial_value": opt.initial_value(&mdp),
        "bellman_residual": o.bellman_residual(&mdp),
        "v": tables["v"],
        "q": tables["q"],
    });
    emit(ctx, None, format!("{doc}\n").as_bytes())
}

fn to_jsonl(records: &[Record<f64>]) -> Result<String, CliError> {
    gpo_core::trajectory::to_jsonl(records).map_err(|e| CliError::Runtime(e.to_string()))
}

fn profile(a: ProfileArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let (config, _) = load_config(&a.cfg, ctx.env_seed.as_deref())?;
    let mdp = build_env(&config)?;
    let policy = load_policy(a.policy.as_deref(), &mdp)?;
    let oracle = if a.exact {
        Some(backward_induction(&mdp, &policy).map_err(|e| CliError::Runtime(e.to_string()))?)
    } else {
        None
    };
    let root = SeedPath::new(config.seed);
    let mut records = Vec::with_capacity(2 * a.count);
    for k in 0..a.count as u64 {
        let traj = sample_trajectory(&mdp, &policy, root.purpose(Purpose::Trajectory).child(k).seed());
        let mode = match &oracle {
            Some(o) => AdvantageMode::Exact(o),
            None => AdvantageMode::MonteCarlo {
                n_samples: config.mc_samples,
            },
        };
        let q_seed = root.purpose(Purpose::QEstimate).child(k).seed();
        let mut p =
            advantage_profile(&mdp, &policy, &traj, mode, q_seed).map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Gamma::Finite(_) = config.gamma {
            let mut rng = root.purpose(Purpose::Selection).child(k).stream();
            p.reselect(SelectionMode::SoftmaxSample, config.gamma, &mut rng)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        records.push(Record::Trajectory(traj));
        records.push(Record::AdvantageProfile(p));
    }
    let text = match a.format {
        ProfileFormat::Jsonl => to_jsonl(&records)?,
        ProfileFormat::Table => profile_table(&records),
    };
    emit(ctx, a.out.as_deref(), text.as_bytes())
}

/// `trajectory,index,q_hat,advantage,chosen` rows for every profile.
fn profile_table(records: &[Record<f64>]) -> String {
    let mut out = String::from("trajectory,index,q_hat,advantage,chosen\n");
    let profiles = records.iter().filter_map(|r| match r {
        Record::AdvantageProfile(p) => Some(p),
        _ => None,
    });
    for (k, p) in profiles.enumerate() {
        for (i, (q, adv)) in p.q_hats.iter().zip(&p.advantages).enumerate() {
            out.push_str(&format!(
                "{k},{i},{},{},{}\n",
                q.mean,
                adv,
                u8::from(i == p.critical_index)
            ));
        }
    }
    out
}

fn collect(a: CollectArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let (mut config, _) = load_config(&a.cfg, ctx.env_seed.as_deref())?;
    if let Some(n) = a.mc_samples {
        config.mc_samples = n;
    }
    if let Some(g) = a.gamma {
        config.gamma = g;
    }
    if let Some(b) = a.budget {
        config.budget = b;
    }
    let procedure = a
        .procedure
        .unwrap_or(match (config.method.is_online(), config.method.is_gpo()) {
            (true, true) => Procedure::One,
            (true, false) => Procedure::Plain,
            (false, true) => Procedure::Two,
            (false, false) => Procedure::Whole,
        });
    let offline_method = |method, pairing| TrainConfig {
        method,
        pairing,
        ..config.clone()
    };
    config = match procedure {
        Procedure::One | Procedure::Plain => config,
        Procedure::Two if config.method.offline_loss().is_some() && config.method.is_gpo() => config,
        Procedure::Two => offline_method(Method::GpoDpo, None),
        Procedure::Random => offline_method(Method::GpoDpo, Some(Pairing::Random)),
        Procedure::Whole => offline_method(Method::Dpo, Some(Pairing::WholeTrajectory)),
    };
    config.validate()?;
    let mdp = build_env(&config)?;
    let reference = SoftmaxPolicy::uniform_for(&mdp);
    let records: Vec<Record<f64>> = match procedure {
        Procedure::One | Procedure::Plain => {
            // The buffer the first online iteration would collect.
            let pool = QuestionPool::from_initial_dist(mdp.clone(), config.questions, config.seed);
            let seed = SeedPath::new(config.seed).purpose(Purpose::Iteration).child(1).seed();
            let buffer = if procedure == Procedure::One {
                collect_procedure_one(
                    &pool,
                    &reference,
                    config.batch_size,
                    config.estimates(),
                    config.gamma,
                    seed,
                    a.workers,
                )
            } else {
                collect_plain(&pool, &reference, config.batch_size, seed, a.workers)
            }
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            buffer
                .entries
                .into_iter()
                .map(|e| Record::Trajectory(e.trajectory))
                .collect()
        }
        _ => {
            let (data, _) = build_offline_dataset(&config, &mdp, &reference, a.workers)?;
            match data {
                OfflineDataset::Pairs(p) => p.into_iter().map(Record::PreferencePair).collect(),
                OfflineDataset::Tagged(k) => k.into_iter().map(Record::KtoExample).collect(),
                OfflineDataset::Weighted(_) => {
                    return Err(CliError::Config(
                        "adv_sft trains on per-step weights, not records; use `profile` to inspect them".into(),
                    ))
                }
            }
        }
    };
    emit(ctx, a.out.as_deref(), to_jsonl(&records)?.as_bytes())
}

/// `spec` is `None` for `train`, `Some(None)` for a sweep re-run from a
/// manifest and `Some(Some(_))` for a new sweep.
fn train_or_sweep(a: RunArgs, spec: Option<Option<SweepSpec>>, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let artifacts: RunArtifacts = if let Some(path) = &a.manifest {
        let manifest = RunManifest::load(path)?;
        match (&manifest.run, &spec) {
            (RunKind::Train, None) | (RunKind::Sweep { .. }, Some(_)) => {}
            _ => {
                return Err(CliError::Config(format!(
                    "manifest {} records a different kind of run",
                    path.display()
                )))
            }
        }
        rerun(&manifest, a.workers)?
    } else {
        let config_path = a
            .config
            .ok_or_else(|| CliError::Usage("--config or --manifest is required".into()))?;
        let cfg_args = ConfigArgs {
            config: config_path,
            seed: a.seed,
        };
        let (config, source) = load_config(&cfg_args, ctx.env_seed.as_deref())?;
        build_env(&config)?;
        let kind = match spec.flatten() {
            Some(s) => {
                s.expand(&config)?;
                RunKind::Sweep { spec: s }
            }
            None => RunKind::Train,
        };
        execute(&kind, &config, source, a.workers)?
    };
    artifacts.write_to(&a.out)?;
    if let Some(summary) = artifacts.file(gpo_core::experiment::SUMMARY_FILE) {
        emit(ctx, None, summary)?;
    }
    Ok(())
}

fn theorem(a: TheoremArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let (config, _) = load_config(&a.cfg, ctx.env_seed.as_deref())?;
    let mdp = build_env(&config)?;
    let mut options = Theorem2Options::default();
    if let Some(n) = a.max_iterations {
        options.max_iterations = n;
    }
    let beta = a.beta.unwrap_or(config.beta);
    let reference = SoftmaxPolicy::uniform_for(&mdp);
    let report = verify_theorem2(&mdp, &reference, beta, options)?;
    let line = serde_json::to_string(&report).expect("report serializes") + "\n";
    emit(ctx, None, line.as_bytes())?;
    if !report.converged {
        return Err(CliError::Runtime(format!(
            "optimization stopped after {} iterations with gradient norm {:e} above {:e}",
            report.iterations, report.final_grad_norm, options.grad_tol
        )));
    }
    Ok(())
}

fn eval(a: EvalArgs, ctx: &mut Context<'_>) -> Result<(), CliError> {
    let (config, _) = load_config(&a.cfg, ctx.env_seed.as_deref())?;
    let mdp = build_env(&config)?;
    let policy = load_policy(Some(&a.policy), &mdp)?;
    let mode = match a.mc {
        Some(n) => EvalMode::MonteCarlo { n, seed: config.seed },
        None => EvalMode::Exact,
    };
    let e = evaluate(&policy, &mdp, mode)?;
    let line = serde_json::to_string(&e).expect("evaluation serializes") + "\n";
    emit(ctx, None, line.as_bytes())
}
