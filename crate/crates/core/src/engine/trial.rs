use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Environment, HypSet};
use crate::oracle::{worst_case_rate, Allocation, OracleCache};
use crate::scalar::Scalar;

use super::{thresholds, EngineError, PolicyConfig, PolicyKind, TrialState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TrialResult<F> {
    /// Stopping time in rounds (the cap when timed out).
    pub tau: u64,
    pub recommendation: usize,
    pub correct: bool,
    pub timed_out: bool,
    pub diagnostics: Option<DiagnosticsTrace<F>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationEvent {
    pub t: u64,
    pub champion: usize,
    pub removed: Vec<usize>,
}

/// Per-round record of a trial, one entry per round `t = 1..=tau` in each array.
///
/// Rates are evaluated on the champion's active set after that round's
/// eliminations and are `None` once the set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DiagnosticsTrace<F> {
    pub environment: String,
    pub policy: Option<PolicyKind>,
    pub t: Vec<u64>,
    pub champion: Vec<usize>,
    /// `G_t(champion)` after elimination.
    pub active_set: Vec<Vec<usize>>,
    /// Empirical allocation `N(t) / t`.
    pub alloc: Vec<Vec<F>>,
    /// Action counts `N(t)`.
    pub counts: Vec<Vec<u64>>,
    /// Cumulative tracked target `W^tar(t)`, exploration floor included.
    pub target: Vec<Vec<F>>,
    /// Smallest evidence of the champion against its active opponents, before elimination.
    #[serde(rename = "min_Z")]
    pub min_z: Vec<Option<F>>,
    pub beta_elim: Vec<F>,
    /// `D*(champion; G_t)`.
    pub oracle_rate: Vec<Option<F>>,
    /// `f_{G_t}(N(t) / t)`.
    pub empirical_rate: Vec<Option<F>>,
    /// `f_{G_t}` at the time-averaged unfloored oracle target.
    pub target_rate: Vec<Option<F>>,
    pub events: Vec<EliminationEvent>,
}

impl<F: Scalar> DiagnosticsTrace<F> {
    pub fn new(environment: impl Into<String>, policy: Option<PolicyKind>) -> Self {
        DiagnosticsTrace {
            environment: environment.into(),
            policy,
            t: Vec::new(),
            champion: Vec::new(),
            active_set: Vec::new(),
            alloc: Vec::new(),
            counts: Vec::new(),
            target: Vec::new(),
            min_z: Vec::new(),
            beta_elim: Vec::new(),
            oracle_rate: Vec::new(),
            empirical_rate: Vec::new(),
            target_rate: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Opponents in `set` that some action separates from `h`; the oracle is only
/// defined on those.
fn separable_part<F: Scalar>(env: &Environment<F>, h: usize, set: HypSet) -> HypSet {
    let kl = env.kl_table();
    set.iter().filter(|&g| kl.max_over_actions(h, g) > F::zero()).collect()
}

fn sampling_target<F: Scalar>(
    env: &Environment<F>,
    cache: &mut OracleCache<F>,
    h: usize,
    set: HypSet,
) -> Result<Allocation<F>, EngineError> {
    let set = separable_part(env, h, set);
    if set.is_empty() {
        return Ok(Allocation::uniform(env.num_actions()));
    }
    Ok(cache.solve(env.kl_table(), h, set)?.allocation.clone())
}

/// Exploration floor `1 / (2 sqrt(|A|^2 + t))` mixed into the tracked target at round `t + 1`.
fn exploration_floor<F: Scalar>(num_actions: usize, t: u64) -> F {
    let n = num_actions as f64;
    F::lit(0.5 / (n * n + t as f64).sqrt())
}

/// Runs one trial of `cfg.kind` with observations drawn under `true_h`.
///
/// The result is a deterministic function of `(env, true_h, cfg, seed)`.
pub fn run_trial<F: Scalar>(
    env: &Environment<F>,
    true_h: usize,
    cfg: &PolicyConfig<F>,
    seed: u64,
    record_diagnostics: bool,
) -> Result<TrialResult<F>, EngineError> {
    cfg.validate()?;
    let k = env.num_hypotheses();
    if true_h >= k {
        return Err(EngineError::HypothesisOutOfRange { index: true_h, limit: k });
    }
    if !env.is_separable(true_h) {
        return Err(EngineError::NotSeparable(true_h));
    }

    let n_a = env.num_actions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = TrialState::new(env);
    let mut cache = OracleCache::new();
    let mut trace = record_diagnostics.then(|| DiagnosticsTrace::new(env.name(), Some(cfg.kind)));

    let mut target_key: Option<(usize, HypSet)> = None;
    let mut target = Allocation::uniform(n_a);

    loop {
        let h = state.champion();
        let action = match cfg.kind {
            PolicyKind::Greedy => state.greedy_select(env),
            PolicyKind::TaS | PolicyKind::StopElim | PolicyKind::FullElim => {
                let set = if cfg.kind == PolicyKind::FullElim {
                    state.active(h)
                } else {
                    HypSet::all_except(k, h)
                };
                if target_key != Some((h, set)) {
                    target = sampling_target(env, &mut cache, h, set)?;
                    target_key = Some((h, set));
                }
                state.record_raw_target(&target);
                let eps = exploration_floor::<F>(n_a, state.t());
                let keep = F::one() - F::lit(n_a as f64) * eps;
                state.accumulate_and_select(target.weights().iter().map(|&w| keep * w + eps))
            }
        };

        let o = env.sample_observation(action, true_h, &mut rng);
        state.update_likelihoods(env, action, o);
        let t = state.t();
        let h = state.champion();
        let th = thresholds(t, cfg);
        let min_z_before = state.min_llr(h, state.active(h));

        let stopped = match cfg.kind {
            PolicyKind::Greedy | PolicyKind::TaS => {
                // GLR rule: min over all g != champion. Elimination sets are
                // not maintained by these policies.
                state
                    .min_llr(h, HypSet::all_except(k, h))
                    .is_none_or(|z| z >= th.stop)
            }
            PolicyKind::StopElim | PolicyKind::FullElim => {
                let removed = state.eliminate(cfg);
                if let Some(tr) = trace.as_mut() {
                    if !removed.is_empty() {
                        tr.events.push(EliminationEvent { t, champion: h, removed: removed.to_vec() });
                    }
                }
                state.active(h).is_empty()
            }
        };

        if let Some(tr) = trace.as_mut() {
            record_round(tr, env, &state, &mut cache, min_z_before, th.elim)?;
        }

        if stopped || t >= cfg.max_steps {
            let recommendation = state.champion();
            return Ok(TrialResult {
                tau: t,
                recommendation,
                correct: recommendation == true_h,
                timed_out: !stopped,
                diagnostics: trace,
            });
        }
    }
}

fn record_round<F: Scalar>(
    tr: &mut DiagnosticsTrace<F>,
    env: &Environment<F>,
    state: &TrialState<F>,
    cache: &mut OracleCache<F>,
    min_z: Option<F>,
    beta_elim: F,
) -> Result<(), EngineError> {
    let h = state.champion();
    let set = state.active(h);
    let alloc = state.empirical_allocation();
    let rated = separable_part(env, h, set);
    let (oracle_rate, empirical_rate, target_rate) = if rated.is_empty() {
        (None, None, None)
    } else {
        let kl = env.kl_table();
        let t = F::lit(state.t() as f64);
        let avg: Vec<F> = state.raw_target().iter().map(|&w| w / t).collect();
        let f_emp = worst_case_rate(kl, h, rated, &Allocation::normalized(&alloc))?;
        let f_tar = if avg.iter().any(|&w| w > F::zero()) {
            Some(worst_case_rate(kl, h, rated, &Allocation::normalized(&avg))?)
        } else {
            None
        };
        (Some(cache.solve(kl, h, rated)?.rate), Some(f_emp), f_tar)
    };

    tr.t.push(state.t());
    tr.champion.push(h);
    tr.active_set.push(set.to_vec());
    tr.alloc.push(alloc);
    tr.counts.push(state.counts().to_vec());
    tr.target.push(state.target().to_vec());
    tr.min_z.push(min_z);
    tr.beta_elim.push(beta_elim);
    tr.oracle_rate.push(oracle_rate);
    tr.empirical_rate.push(empirical_rate);
    tr.target_rate.push(target_rate);
    Ok(())
}
