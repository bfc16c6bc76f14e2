//! Single-trial execution of the four sampling/stopping policies.
//!
//! * `Greedy`: samples the action that best separates the champion from its
//!   closest rival; stops on the GLR rule.
//! * `TaS`: C-Tracking toward the oracle allocation against every other
//!   hypothesis; stops on the GLR rule.
//! * `StopElim`: TaS sampling, stops once the champion's active-opponent set
//!   is empty.
//! * `FullElim`: tracks the oracle allocation against the champion's active
//!   opponents and stops when that set is empty.

mod state;
mod trial;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::OracleError;
use crate::scalar::Scalar;

pub use state::TrialState;
pub use trial::{run_trial, DiagnosticsTrace, EliminationEvent, TrialResult};

/// Trial cap applied when none is configured.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;
/// Default slope `b` of the `b log t + c` threshold term.
pub const DEFAULT_SLOPE: f64 = 2.0;

/// Default offset `c = log(K - 1)`; zero when there are fewer than two opponents.
pub fn default_offset(num_hypotheses: usize) -> f64 {
    if num_hypotheses > 2 {
        ((num_hypotheses - 1) as f64).ln()
    } else {
        0.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid policy configuration: {0}")]
    InvalidConfig(String),
    #[error("hypothesis {index} out of range (environment has {limit})")]
    HypothesisOutOfRange { index: usize, limit: usize },
    #[error("log-likelihood ratio of hypothesis {0} against itself")]
    SameHypothesis(usize),
    #[error("true hypothesis {0} cannot be separated from every alternative")]
    NotSeparable(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    Greedy,
    TaS,
    StopElim,
    FullElim,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Greedy, PolicyKind::TaS, PolicyKind::StopElim, PolicyKind::FullElim];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "Greedy",
            PolicyKind::TaS => "TaS",
            PolicyKind::StopElim => "StopElim",
            PolicyKind::FullElim => "FullElim",
        }
    }

    /// Stable numeric id used in seed derivation.
    pub fn id(self) -> u64 {
        match self {
            PolicyKind::Greedy => 1,
            PolicyKind::TaS => 2,
            PolicyKind::StopElim => 3,
            PolicyKind::FullElim => 4,
        }
    }

    /// Whether the policy stops on an empty active-opponent set (and so depends on alpha).
    pub fn uses_elimination(self) -> bool {
        matches!(self, PolicyKind::StopElim | PolicyKind::FullElim)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "greedy" => Ok(PolicyKind::Greedy),
            "tas" => Ok(PolicyKind::TaS),
            "stopelim" => Ok(PolicyKind::StopElim),
            "fullelim" => Ok(PolicyKind::FullElim),
            _ => Err(format!("unknown policy `{s}` (expected greedy, tas, stopelim or fullelim)")),
        }
    }
}

/// Policy, confidence and threshold parameters of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct PolicyConfig<F> {
    pub kind: PolicyKind,
    pub delta: F,
    /// Elimination aggressiveness in `(0, 1]`.
    pub alpha: F,
    /// Slope of the `b log t` term.
    pub b: F,
    /// Threshold offset.
    pub c: F,
    pub max_steps: u64,
}

impl<F: Scalar> PolicyConfig<F> {
    /// `alpha = 1`, `b = 2`, `c = log(K - 1)`, default trial cap.
    pub fn with_defaults(kind: PolicyKind, delta: F, num_hypotheses: usize) -> Self {
        PolicyConfig {
            kind,
            delta,
            alpha: F::one(),
            b: F::lit(DEFAULT_SLOPE),
            c: F::lit(default_offset(num_hypotheses)),
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_alpha(mut self, alpha: F) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_threshold(mut self, b: F, c: F) -> Self {
        self.b = b;
        self.c = c;
        self
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if !(self.delta > F::zero() && self.delta < F::one()) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.alpha > F::zero() && self.alpha <= F::one()) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.b > F::zero() && self.b.is_finite()) {
            return bad(format!("b must be positive, got {}", self.b));
        }
        if !self.c.is_finite() {
            return bad(format!("c must be finite, got {}", self.c));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds<F> {
    /// `log(1/delta) + b log t + c`
    pub stop: F,
    /// `alpha log(1/delta) + b log t + c`
    pub elim: F,
}

/// Stopping and elimination thresholds at round `t >= 1`.
pub fn thresholds<F: Scalar>(t: u64, cfg: &PolicyConfig<F>) -> Thresholds<F> {
    debug_assert!(t >= 1, "thresholds are defined from round 1");
    let log_inv_delta = -cfg.delta.ln();
    let gamma = cfg.b * F::lit(t.max(1) as f64).ln() + cfg.c;
    Thresholds { stop: log_inv_delta + gamma, elim: cfg.alpha * log_inv_delta + gamma }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> PolicyConfig<f64> {
        PolicyConfig::with_defaults(PolicyKind::FullElim, 0.1, 5)
            .with_alpha(alpha)
            .with_threshold(2.0, 4f64.ln())
    }

    #[test]
    fn threshold_values() {
        let th = thresholds(100, &cfg(1.0));
        let expected = 10f64.ln() + 2.0 * 100f64.ln() + 4f64.ln();
        assert!((th.stop - expected).abs() < 1e-12);
        assert!((th.stop - 12.8992).abs() < 1e-4);
        assert_eq!(th.stop, th.elim);

        let th = thresholds(100, &cfg(0.5));
        assert!((th.elim - 11.7479).abs() < 1e-4);
        assert!(th.elim < th.stop);
    }

    #[test]
    fn alpha_one_thresholds_coincide() {
        for t in [1, 2, 17, 1000, 123_456] {
            for delta in [0.5, 0.1, 1e-3] {
                let mut c = cfg(1.0);
                c.delta = delta;
                let th = thresholds(t, &c);
                assert_eq!(th.stop, th.elim);
            }
        }
    }

    #[test]
    fn default_offset_is_log_opponents() {
        assert!((default_offset(5) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(default_offset(2), 0.0);
        let c = PolicyConfig::<f64>::with_defaults(PolicyKind::TaS, 0.05, 5);
        assert_eq!(c.alpha, 1.0);
        assert_eq!(c.b, 2.0);
        assert_eq!(c.max_steps, DEFAULT_MAX_STEPS);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1.0).validate().is_ok());
        assert!(cfg(0.0).validate().is_err());
        assert!(cfg(1.2).validate().is_err());
        let mut c = cfg(1.0);
        c.delta = 1.0;
        assert!(c.validate().is_err());
        c.delta = 0.0;
        assert!(c.validate().is_err());
        assert!(cfg(1.0).with_threshold(0.0, 1.0).validate().is_err());
        assert!(cfg(1.0).with_threshold(1.0, -1.0).validate().is_ok());
        assert!(cfg(1.0).with_threshold(1.0, f64::NAN).validate().is_err());
        assert!(cfg(1.0).with_max_steps(0).validate().is_err());
    }

    #[test]
    fn policy_names_parse() {
        for kind in PolicyKind::ALL {
            assert_eq!(kind.name().parse::<PolicyKind>().unwrap(), kind);
        }
        assert_eq!("full-elim".parse::<PolicyKind>().unwrap(), PolicyKind::FullElim);
        assert!("ucb".parse::<PolicyKind>().is_err());
    }
}
