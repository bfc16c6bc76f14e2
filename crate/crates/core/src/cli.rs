//! Command-line front end.
//!
//! Exit codes: `0` success, `1` runtime failure (I/O), `2` usage error,
//! `3` validation error (a value out of range, an unknown environment, an
//! invalid hypothesis set).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::engine::{self, EngineError, PolicyKind};
use crate::harness::{self, ExperimentConfig, HarnessError, Manifest};
use crate::model::{HypSet, ModelError};
use crate::oracle::{self, OracleError};
use crate::{DiagnosticsTrace, Environment};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Model(m) => m.into(),
            HarnessError::Engine(m) => m.into(),
            HarnessError::InvalidConfig(_) | HarnessError::NoResults => CliError::Validation(e.to_string()),
            HarnessError::Io { .. } | HarnessError::Pool(_) => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "elimtas", version, about = "Active hypothesis testing with elimination-augmented Track-and-Stop")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print an environment document and its identifiability summary
    Env {
        #[arg(long, default_value = "skewed")]
        env: String,
    },
    /// Solve the max-min oracle allocation for a candidate and opponent set
    SolveOracle {
        #[arg(long, default_value = "skewed")]
        env: String,
        /// Candidate hypothesis
        #[arg(long)]
        h: usize,
        /// Opponent set; defaults to every other hypothesis
        #[arg(long, value_delimiter = ',')]
        opponents: Option<Vec<usize>>,
    },
    /// Run a single trial and print its outcome
    Trial(TrialArgs),
    /// Stopping-time comparison over the confidence grid (alpha = 1)
    Exp1(SweepArgs),
    /// Time/error trade-off over the aggressiveness grid
    Exp2(SweepArgs),
    /// Record the per-round dynamics of one FullElim trial
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
struct ThresholdArgs {
    /// Threshold slope b (default 2)
    #[arg(long)]
    b: Option<f64>,
    /// Threshold offset c (default log(K-1))
    #[arg(long)]
    c: Option<f64>,
    /// Trial cap
    #[arg(long)]
    max_steps: Option<u64>,
    /// True hypothesis index
    #[arg(long)]
    true_h: Option<usize>,
}

#[derive(Debug, Args)]
struct TrialArgs {
    #[arg(long, default_value = "skewed")]
    env: String,
    #[arg(long, default_value = "fullelim")]
    policy: String,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    threshold: ThresholdArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Preset name or environment document path
    #[arg(long)]
    env: Option<String>,
    /// Start from a saved manifest or configuration document; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Alias of --deltas with one value
    #[arg(long, conflicts_with = "deltas")]
    delta: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Share trial seeds across policies
    #[arg(long)]
    paired: bool,
    /// CSV output path (a manifest is written next to it)
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    threshold: ThresholdArgs,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[arg(long, default_value = "skewed")]
    env: String,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the trace and the per-panel plot files
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    threshold: ThresholdArgs,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    run(argv, &mut stdout.lock())
}

/// Like [`dispatch`] but writes command output to `out`.
pub fn run<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Env { env } => cmd_env(&env, out),
        Command::SolveOracle { env, h, opponents } => cmd_solve_oracle(&env, h, opponents, out),
        Command::Trial(args) => cmd_trial(args, out),
        Command::Exp1(args) => cmd_sweep(args, false, out),
        Command::Exp2(args) => cmd_sweep(args, true, out),
        Command::Diagnose(args) => cmd_diagnose(args, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Runtime(format!("cannot write output: {e}")))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn cmd_env(name: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let env = Environment::resolve(name)?;
    #[derive(Serialize)]
    struct EnvReport {
        document: crate::model::EnvDocument,
        indistinguishable_pairs: Vec<(usize, usize)>,
        /// `max_a d_a(h, g)` for every pair.
        max_divergence: Vec<Vec<f64>>,
    }
    let k = env.num_hypotheses();
    let report = EnvReport {
        document: env.to_document(),
        indistinguishable_pairs: env.indistinguishable_pairs().to_vec(),
        max_divergence: (0..k)
            .map(|h| (0..k).map(|g| env.kl_table().max_over_actions(h, g)).collect())
            .collect(),
    };
    emit(out, &to_json(&report))
}

#[derive(Debug, Serialize)]
struct OracleRecord {
    environment: String,
    h: usize,
    opponents: Vec<usize>,
    weights: Vec<f64>,
    rate: f64,
}

fn cmd_solve_oracle(
    name: &str,
    h: usize,
    opponents: Option<Vec<usize>>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let env = Environment::resolve(name)?;
    let k = env.num_hypotheses();
    if h >= k {
        return Err(CliError::Validation(format!("--h {h} out of range (environment has {k} hypotheses)")));
    }
    let set = match opponents {
        Some(list) => {
            if let Some(&g) = list.iter().find(|&&g| g >= k) {
                return Err(CliError::Validation(format!("opponent {g} out of range")));
            }
            HypSet::from_indices(list)
        }
        None => HypSet::all_except(k, h),
    };
    let sol = oracle::oracle_allocation(env.kl_table(), h, set)?;
    let record = OracleRecord {
        environment: env.name().to_string(),
        h,
        opponents: set.to_vec(),
        weights: sol.allocation.weights().to_vec(),
        rate: sol.rate,
    };
    emit(out, &to_json(&record))
}

fn parse_policy(s: &str) -> Result<PolicyKind, CliError> {
    s.parse().map_err(CliError::Validation)
}

fn cmd_trial(args: TrialArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let env = Environment::resolve(&args.env)?;
    let kind = parse_policy(&args.policy)?;
    let mut cfg = ExperimentConfig::experiment_one(args.env.clone());
    apply_threshold_args(&mut cfg, &args.threshold);
    cfg.validate()?;
    let pcfg = cfg.policy_config(&env, kind, args.delta, args.alpha);
    pcfg.validate()?;
    let result = engine::run_trial(&env, cfg.true_h, &pcfg, args.seed, false)?;
    emit(out, &to_json(&result))
}

fn apply_threshold_args(cfg: &mut ExperimentConfig, t: &ThresholdArgs) {
    if t.b.is_some() {
        cfg.b = t.b;
    }
    if t.c.is_some() {
        cfg.c = t.c;
    }
    if let Some(m) = t.max_steps {
        cfg.max_steps = m;
    }
    if let Some(h) = t.true_h {
        cfg.true_h = h;
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        return Ok(manifest.config);
    }
    serde_json::from_str::<ExperimentConfig>(&text)
        .map_err(|e| CliError::Validation(format!("{}: not a configuration document: {e}", path.display())))
}

fn resolve_sweep(args: &SweepArgs, alpha_sweep: bool) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?,
        None => {
            let env = args.env.clone().unwrap_or_else(|| "skewed".into());
            if alpha_sweep {
                ExperimentConfig::experiment_two(env)
            } else {
                ExperimentConfig::experiment_one(env)
            }
        }
    };
    if let Some(env) = &args.env {
        cfg.environment = env.clone();
    }
    if let Some(list) = &args.policies {
        cfg.policies = list.iter().map(|p| parse_policy(p)).collect::<Result<_, _>>()?;
    }
    if let Some(d) = args.delta {
        cfg.deltas = vec![d];
    }
    if let Some(ds) = &args.deltas {
        cfg.deltas = ds.clone();
    }
    if let Some(a) = &args.alphas {
        cfg.alphas = a.clone();
    }
    if let Some(n) = args.trials {
        cfg.trials = n;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if args.paired {
        cfg.paired = true;
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    apply_threshold_args(&mut cfg, &args.threshold);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(args: SweepArgs, alpha_sweep: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = resolve_sweep(&args, alpha_sweep)?;
    let rows = if alpha_sweep { harness::run_alpha_sweep(&cfg)? } else { harness::run_delta_sweep(&cfg)? };
    let name = if alpha_sweep { "exp2" } else { "exp1" };
    match &cfg.output {
        Some(path) => {
            harness::write_manifest(path, name, &cfg, None)?;
            emit(out, &format!("wrote {} rows to {}", rows.len(), path.display()))
        }
        None => emit(out, harness::to_csv(&rows).trim_end()),
    }
}

fn cmd_diagnose(args: DiagnoseArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig {
        policies: vec![PolicyKind::FullElim],
        deltas: vec![args.delta],
        alphas: vec![args.alpha],
        trials: 1,
        base_seed: args.seed,
        ..ExperimentConfig::experiment_one(args.env.clone())
    };
    apply_threshold_args(&mut cfg, &args.threshold);
    cfg.output = args.out.as_ref().map(|dir| dir.join("trace.json"));
    cfg.validate()?;
    let trace = harness::run_diagnostic_trial(&cfg, args.seed)?;
    match &args.out {
        Some(dir) => {
            let trace_path = dir.join("trace.json");
            harness::write_manifest(&trace_path, "diagnose", &cfg, Some(args.seed))?;
            let files = emit_plot_data(&trace, dir)?;
            emit(out, &format!("wrote trace ({} rounds) and {} plot files to {}", trace.len(), files.len(), dir.display()))
        }
        None => emit(out, &serde_json::to_string(&trace).expect("trace serializes")),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn join_indices(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Writes one CSV file per diagnostics panel into `dir`:
///
/// * `active_set.csv` — one row per elimination event: `t,champion,removed,remaining`
/// * `allocation.csv` — empirical allocation per round: `t,a0,a1,..`
/// * `evidence.csv` — `t,champion,min_Z,beta_elim`
/// * `rates.csv` — `t,champion,oracle_rate,empirical_rate,target_rate`
///
/// Index lists are `;`-separated; missing values are `NA`.
pub fn emit_plot_data(trace: &DiagnosticsTrace, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if trace.is_empty() {
        return Err(CliError::Usage("diagnostics trace is empty; nothing to plot".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;

    let mut active = String::from("t,champion,removed,remaining\n");
    for ev in &trace.events {
        let idx = trace.t.iter().position(|&t| t == ev.t);
        let remaining = idx.map(|i| join_indices(&trace.active_set[i])).unwrap_or_default();
        active.push_str(&format!("{},{},{},{}\n", ev.t, ev.champion, join_indices(&ev.removed), remaining));
    }

    let n_a = trace.alloc.first().map_or(0, Vec::len);
    let mut alloc = String::from("t");
    for a in 0..n_a {
        alloc.push_str(&format!(",a{a}"));
    }
    alloc.push('\n');
    let mut evidence = String::from("t,champion,min_Z,beta_elim\n");
    let mut rates = String::from("t,champion,oracle_rate,empirical_rate,target_rate\n");
    for i in 0..trace.len() {
        let t = trace.t[i];
        alloc.push_str(&t.to_string());
        for w in &trace.alloc[i] {
            alloc.push_str(&format!(",{w}"));
        }
        alloc.push('\n');
        evidence.push_str(&format!("{t},{},{},{}\n", trace.champion[i], fmt_opt(trace.min_z[i]), trace.beta_elim[i]));
        rates.push_str(&format!(
            "{t},{},{},{},{}\n",
            trace.champion[i],
            fmt_opt(trace.oracle_rate[i]),
            fmt_opt(trace.empirical_rate[i]),
            fmt_opt(trace.target_rate[i])
        ));
    }

    let mut written = Vec::with_capacity(4);
    for (name, body) in [
        ("active_set.csv", active),
        ("allocation.csv", alloc),
        ("evidence.csv", evidence),
        ("rates.csv", rates),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
