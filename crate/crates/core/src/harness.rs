//! Seeded Monte Carlo sweeps over policies, confidence levels and elimination
//! aggressiveness.
//!
//! Every trial gets its own seed, derived from the cell coordinates and the
//! trial index, so a cell can be rerun in isolation and the output does not
//! depend on the number of workers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, PolicyKind};
use crate::model::ModelError;
use crate::{DiagnosticsTrace, Environment, PolicyConfig, TrialResult};

/// Confidence grid of the stopping-time comparison.
pub const EXPERIMENT_ONE_DELTAS: [f64; 5] = [0.1, 0.05, 0.01, 0.005, 0.001];
/// Aggressiveness grid of the time/error trade-off.
pub const EXPERIMENT_TWO_ALPHAS: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const DEFAULT_TRIALS: usize = 1000;

pub const CSV_HEADER: &str = "environment,policy,delta,alpha,mean_tau,stderr_tau,error_rate,timeouts,trials";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error("no trial results to aggregate")]
    NoResults,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset name or path to an environment document.
    pub environment: String,
    pub true_h: usize,
    pub policies: Vec<PolicyKind>,
    pub deltas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub workers: usize,
    pub output: Option<PathBuf>,
    /// Threshold slope; `None` means the default `2`.
    pub b: Option<f64>,
    /// Threshold offset; `None` means `log(K - 1)`.
    pub c: Option<f64>,
    pub max_steps: u64,
    /// Share trial seeds across policies (paired comparison).
    pub paired: bool,
}

impl ExperimentConfig {
    /// All four policies over the confidence grid at `alpha = 1`.
    pub fn experiment_one(environment: impl Into<String>) -> Self {
        ExperimentConfig {
            environment: environment.into(),
            true_h: 0,
            policies: PolicyKind::ALL.to_vec(),
            deltas: EXPERIMENT_ONE_DELTAS.to_vec(),
            alphas: vec![1.0],
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            workers: 1,
            output: None,
            b: None,
            c: None,
            max_steps: engine::DEFAULT_MAX_STEPS,
            paired: false,
        }
    }

    /// FullElim over the aggressiveness grid at `delta = 0.1`.
    pub fn experiment_two(environment: impl Into<String>) -> Self {
        ExperimentConfig {
            policies: vec![PolicyKind::FullElim],
            deltas: vec![0.1],
            alphas: EXPERIMENT_TWO_ALPHAS.to_vec(),
            ..Self::experiment_one(environment)
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.policies.is_empty() || self.deltas.is_empty() || self.alphas.is_empty() {
            return bad("policy, delta and alpha grids must be nonempty");
        }
        if self.deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
            return bad("every delta must lie in (0, 1)");
        }
        if self.alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return bad("every alpha must lie in (0, 1]");
        }
        if self.b.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
            return bad("b must be positive");
        }
        if self.c.is_some_and(|c| !c.is_finite()) {
            return bad("c must be finite");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }

    pub fn load_environment(&self) -> Result<Environment, HarnessError> {
        let env = Environment::resolve(&self.environment)?;
        if self.true_h >= env.num_hypotheses() {
            return Err(HarnessError::InvalidConfig(format!(
                "true hypothesis {} out of range (environment has {})",
                self.true_h,
                env.num_hypotheses()
            )));
        }
        Ok(env)
    }

    pub fn policy_config(&self, env: &Environment, kind: PolicyKind, delta: f64, alpha: f64) -> PolicyConfig {
        let mut cfg = PolicyConfig::with_defaults(kind, delta, env.num_hypotheses())
            .with_alpha(alpha)
            .with_max_steps(self.max_steps);
        if let Some(b) = self.b {
            cfg.b = b;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        cfg
    }

    /// Seed of trial `index` in the cell `(kind, delta, alpha)`.
    pub fn trial_seed(&self, kind: PolicyKind, delta: f64, alpha: f64, index: u64) -> u64 {
        let policy = if self.paired { 0 } else { kind.id() };
        self.base_seed ^ stable_hash(&[policy, delta.to_bits(), alpha.to_bits(), index])
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive 64-bit mix of `words`; stable across platforms and releases.
pub fn stable_hash(words: &[u64]) -> u64 {
    words.iter().fold(0x005E_ED0F_E11A_7A55u64, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Monte Carlo statistics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    /// Mean stopping time over trials that stopped; `None` if all timed out.
    pub mean_tau: Option<f64>,
    pub stderr_tau: Option<f64>,
    /// Fraction of stopped trials with a wrong recommendation.
    pub error_rate: Option<f64>,
    pub timeouts: usize,
    pub trials: usize,
}

impl Aggregate {
    /// Whether no trial stopped before the cap.
    pub fn all_timed_out(&self) -> bool {
        self.mean_tau.is_none()
    }
}

/// Reduces trial outcomes. Timed-out trials are counted but excluded from the
/// stopping-time and error statistics. Sums are exact integer sums, so the
/// result does not depend on the order of `results`.
pub fn aggregate(results: &[TrialResult]) -> Result<Aggregate, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::NoResults);
    }
    let mut n: u128 = 0;
    let mut sum: u128 = 0;
    let mut sum_sq: u128 = 0;
    let mut wrong: usize = 0;
    for r in results.iter().filter(|r| !r.timed_out) {
        let tau = r.tau as u128;
        n += 1;
        sum += tau;
        sum_sq += tau * tau;
        if !r.correct {
            wrong += 1;
        }
    }
    let timeouts = results.len() - n as usize;
    if n == 0 {
        return Ok(Aggregate { mean_tau: None, stderr_tau: None, error_rate: None, timeouts, trials: results.len() });
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    let stderr = if n > 1 {
        // n * sum_sq - sum^2 = n (n - 1) * sample variance, exact in integers
        let scaled = n * sum_sq - sum * sum;
        (scaled as f64 / (nf * (nf - 1.0)) / nf).sqrt()
    } else {
        0.0
    };
    Ok(Aggregate {
        mean_tau: Some(mean),
        stderr_tau: Some(stderr),
        error_rate: Some(wrong as f64 / nf),
        timeouts,
        trials: results.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub environment: String,
    pub policy: PolicyKind,
    pub delta: f64,
    pub alpha: f64,
    pub stats: Aggregate,
}

impl SummaryRow {
    pub fn mean_tau(&self) -> Option<f64> {
        self.stats.mean_tau
    }

    pub fn stderr_tau(&self) -> Option<f64> {
        self.stats.stderr_tau
    }

    pub fn error_rate(&self) -> Option<f64> {
        self.stats.error_rate
    }

    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.environment,
            self.policy,
            self.delta,
            self.alpha,
            opt(self.stats.mean_tau),
            opt(self.stats.stderr_tau),
            opt(self.stats.error_rate),
            self.stats.timeouts,
            self.stats.trials
        )
    }
}

/// Sorts by policy, then delta descending, then alpha ascending.
pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|x, y| {
        x.policy
            .cmp(&y.policy)
            .then(y.delta.total_cmp(&x.delta))
            .then(x.alpha.total_cmp(&y.alpha))
    });
}

pub fn to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let _ = writeln!(out, "{}", row.to_csv_line());
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

/// Path of the manifest written next to `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Seed of the single recorded trial, for `diagnose`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Writes the resolved configuration next to `output`.
pub fn write_manifest(
    output: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    seed: Option<u64>,
) -> Result<PathBuf, HarnessError> {
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seed,
    };
    let path = manifest_path(output);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&path, &(text + "\n"))?;
    Ok(path)
}

/// Runs every trial of the given cells and returns one sorted row per cell.
pub fn run_cells(
    cfg: &ExperimentConfig,
    env: &Environment,
    cells: &[(PolicyKind, f64, f64)],
) -> Result<Vec<SummaryRow>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;

    let mut rows = Vec::with_capacity(cells.len());
    for &(kind, delta, alpha) in cells {
        let pcfg = cfg.policy_config(env, kind, delta, alpha);
        pcfg.validate()?;
        let results: Result<Vec<TrialResult>, EngineError> = pool.install(|| {
            (0..cfg.trials as u64)
                .into_par_iter()
                .map(|i| engine::run_trial(env, cfg.true_h, &pcfg, cfg.trial_seed(kind, delta, alpha, i), false))
                .collect()
        });
        let stats = aggregate(&results?)?;
        rows.push(SummaryRow { environment: env.name().to_string(), policy: kind, delta, alpha, stats });
    }
    sort_rows(&mut rows);
    Ok(rows)
}

fn finish(cfg: &ExperimentConfig, rows: Vec<SummaryRow>) -> Result<Vec<SummaryRow>, HarnessError> {
    if let Some(path) = &cfg.output {
        write_file(path, &to_csv(&rows))?;
    }
    Ok(rows)
}

/// Every configured policy over the delta grid, at `alpha = 1`.
pub fn run_delta_sweep(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>, HarnessError> {
    cfg.validate()?;
    let env = cfg.load_environment()?;
    let cells: Vec<_> = cfg
        .policies
        .iter()
        .flat_map(|&p| cfg.deltas.iter().map(move |&d| (p, d, 1.0)))
        .collect();
    let rows = run_cells(cfg, &env, &cells)?;
    finish(cfg, rows)
}

/// Elimination policies over the alpha grid, for each configured delta.
pub fn run_alpha_sweep(cfg: &ExperimentConfig) -> Result<Vec<SummaryRow>, HarnessError> {
    cfg.validate()?;
    if let Some(p) = cfg.policies.iter().find(|p| !p.uses_elimination()) {
        return Err(HarnessError::InvalidConfig(format!("alpha sweep needs an elimination policy, got {p}")));
    }
    let env = cfg.load_environment()?;
    let cells: Vec<_> = cfg
        .policies
        .iter()
        .flat_map(|&p| cfg.deltas.iter().flat_map(move |&d| cfg.alphas.iter().map(move |&a| (p, d, a))))
        .collect();
    let rows = run_cells(cfg, &env, &cells)?;
    finish(cfg, rows)
}

/// One FullElim trial at the first configured delta and alpha, with the full
/// per-round trace. Writes the trace as JSON when an output path is set.
pub fn run_diagnostic_trial(cfg: &ExperimentConfig, seed: u64) -> Result<DiagnosticsTrace, HarnessError> {
    cfg.validate()?;
    let env = cfg.load_environment()?;
    let pcfg = cfg.policy_config(&env, PolicyKind::FullElim, cfg.deltas[0], cfg.alphas[0]);
    let result = engine::run_trial(&env, cfg.true_h, &pcfg, seed, true)?;
    let trace = result.diagnostics.expect("diagnostics requested");
    if let Some(path) = &cfg.output {
        let text = serde_json::to_string(&trace).expect("trace serializes");
        write_file(path, &(text + "\n"))?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(tau: u64, correct: bool, timed_out: bool) -> TrialResult {
        TrialResult { tau, recommendation: if correct { 0 } else { 1 }, correct, timed_out, diagnostics: None }
    }

    #[test]
    fn aggregate_basic() {
        let a = aggregate(&[result(1, true, false), result(2, true, false), result(3, true, false)]).unwrap();
        assert_eq!(a.mean_tau, Some(2.0));
        assert_eq!(a.error_rate, Some(0.0));
        assert!((a.stderr_tau.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);

        let a = aggregate(&[
            result(5, true, false),
            result(5, false, false),
            result(5, true, false),
            result(5, true, false),
        ])
        .unwrap();
        assert_eq!(a.error_rate, Some(0.25));
        assert_eq!(a.stderr_tau, Some(0.0));
    }

    #[test]
    fn aggregate_single_and_timeouts() {
        let a = aggregate(&[result(17, true, false)]).unwrap();
        assert_eq!((a.mean_tau, a.stderr_tau), (Some(17.0), Some(0.0)));

        let a = aggregate(&[result(10, true, false), result(100, false, true)]).unwrap();
        assert_eq!(a.mean_tau, Some(10.0));
        assert_eq!(a.error_rate, Some(0.0));
        assert_eq!((a.timeouts, a.trials), (1, 2));

        let a = aggregate(&[result(100, false, true)]).unwrap();
        assert!(a.all_timed_out());
        assert!(a.error_rate.is_none());
        assert!(matches!(aggregate(&[]), Err(HarnessError::NoResults)));
    }

    #[test]
    fn aggregate_order_independent() {
        let mut rs: Vec<_> = (0..50).map(|i| result(i * 37 % 101 + 1, i % 7 != 0, i % 11 == 0)).collect();
        let a = aggregate(&rs).unwrap();
        rs.reverse();
        assert_eq!(aggregate(&rs).unwrap(), a);
        rs.sort_by_key(|r| r.tau);
        assert_eq!(aggregate(&rs).unwrap(), a);
    }

    #[test]
    fn seeds_separate_cells() {
        let cfg = ExperimentConfig::experiment_one("skewed");
        let s = |k, d, a, i| cfg.trial_seed(k, d, a, i);
        assert_ne!(s(PolicyKind::TaS, 0.1, 1.0, 0), s(PolicyKind::FullElim, 0.1, 1.0, 0));
        assert_ne!(s(PolicyKind::TaS, 0.1, 1.0, 0), s(PolicyKind::TaS, 0.05, 1.0, 0));
        assert_ne!(s(PolicyKind::TaS, 0.1, 1.0, 0), s(PolicyKind::TaS, 0.1, 0.8, 0));
        assert_ne!(s(PolicyKind::TaS, 0.1, 1.0, 0), s(PolicyKind::TaS, 0.1, 1.0, 1));
        let paired = ExperimentConfig { paired: true, ..cfg.clone() };
        assert_eq!(
            paired.trial_seed(PolicyKind::TaS, 0.1, 1.0, 3),
            paired.trial_seed(PolicyKind::FullElim, 0.1, 1.0, 3)
        );
        // frozen value: seed derivation must never drift between releases
        assert_eq!(stable_hash(&[]), 0x005E_ED0F_E11A_7A55);
        assert_eq!(stable_hash(&[1, 2]), stable_hash(&[1, 2]));
        assert_ne!(stable_hash(&[1, 2]), stable_hash(&[2, 1]));
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::experiment_one("skewed");
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentConfig { trials: 0, ..ok.clone() },
            ExperimentConfig { workers: 0, ..ok.clone() },
            ExperimentConfig { deltas: vec![], ..ok.clone() },
            ExperimentConfig { deltas: vec![1.0], ..ok.clone() },
            ExperimentConfig { alphas: vec![0.0], ..ok.clone() },
            ExperimentConfig { alphas: vec![1.5], ..ok.clone() },
            ExperimentConfig { policies: vec![], ..ok.clone() },
            ExperimentConfig { b: Some(-1.0), ..ok.clone() },
            ExperimentConfig { max_steps: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
        let wrong_h = ExperimentConfig { true_h: 9, ..ok };
        assert!(wrong_h.load_environment().is_err());
    }

    #[test]
    fn csv_layout_and_sorting() {
        let stats = Aggregate { mean_tau: Some(2.5), stderr_tau: Some(0.5), error_rate: Some(0.0), timeouts: 0, trials: 2 };
        let row = |policy, delta, alpha| SummaryRow { environment: "skewed".into(), policy, delta, alpha, stats };
        let mut rows = vec![
            row(PolicyKind::FullElim, 0.05, 1.0),
            row(PolicyKind::TaS, 0.01, 1.0),
            row(PolicyKind::TaS, 0.1, 1.0),
            row(PolicyKind::FullElim, 0.1, 0.4),
            row(PolicyKind::FullElim, 0.1, 0.2),
        ];
        sort_rows(&mut rows);
        let order: Vec<_> = rows.iter().map(|r| (r.policy, r.delta, r.alpha)).collect();
        assert_eq!(
            order,
            vec![
                (PolicyKind::TaS, 0.1, 1.0),
                (PolicyKind::TaS, 0.01, 1.0),
                (PolicyKind::FullElim, 0.1, 0.2),
                (PolicyKind::FullElim, 0.1, 0.4),
                (PolicyKind::FullElim, 0.05, 1.0),
            ]
        );
        let csv = to_csv(&rows[..1]);
        assert_eq!(csv, format!("{CSV_HEADER}\nskewed,TaS,0.1,1,2.5000,0.5000,0.0000,0,2\n"));
        let na = SummaryRow {
            stats: Aggregate { mean_tau: None, stderr_tau: None, error_rate: None, timeouts: 3, trials: 3 },
            ..rows[0].clone()
        };
        assert!(na.to_csv_line().ends_with("NA,NA,NA,3,3"));
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/exp1.csv")), PathBuf::from("out/exp1.csv.manifest.json"));
    }

    #[test]
    fn alpha_sweep_rejects_non_elimination_policy() {
        let cfg = ExperimentConfig { policies: vec![PolicyKind::TaS], trials: 1, ..ExperimentConfig::experiment_two("skewed") };
        assert!(matches!(run_alpha_sweep(&cfg), Err(HarnessError::InvalidConfig(_))));
    }
}
