//! Worst-case information rate and the max-min oracle allocation.
//!
//! For a candidate `h` and an opponent set `S`, the rate of an allocation `w`
//! over actions is `f_S(w) = min_{g in S} sum_a w_a d_a(h, g)`. The oracle
//! allocation maximizes it over the simplex; its value `D*(h; S)` is the best
//! evidence drift achievable against the hardest opponent in `S`.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{HypSet, KlTable};
use crate::scalar::{argmax_first, Scalar};
use crate::simplex::{self, LpError};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("opponent set is empty")]
    EmptyOpponents,
    #[error("candidate {0} is contained in its own opponent set")]
    CandidateInOpponents(usize),
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("allocation has {got} weights, expected {expected}")]
    Length { got: usize, expected: usize },
    #[error("weights must be nonnegative and sum to one: {0}")]
    NotOnSimplex(String),
    #[error("no action separates candidate {h} from opponent {g}: oracle rate is zero")]
    ZeroRate { h: usize, g: usize },
    #[error("grid enumeration supports at most 4 actions, got {0}")]
    GridTooLarge(usize),
    #[error("grid step must lie in (0, 0.5], got {0}")]
    BadStep(f64),
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

/// A point on the action simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<F> {
    weights: Vec<F>,
}

impl<F: Scalar> Allocation<F> {
    /// Validates `weights`: entries above `-1e-12` (small negatives clamp to 0)
    /// summing to one within `1e-9` (or a few ulps for `f32`).
    pub fn new(mut weights: Vec<F>) -> Result<Self, OracleError> {
        if weights.is_empty() {
            return Err(OracleError::NotOnSimplex("no weights".into()));
        }
        let neg_tol = F::lit(-1e-12);
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < neg_tol {
                return Err(OracleError::NotOnSimplex(format!("weight {w}")));
            }
            if *w < F::zero() {
                *w = F::zero();
            }
        }
        let sum: F = weights.iter().copied().sum();
        if (sum - F::one()).abs() > sum_tolerance::<F>(weights.len()) {
            return Err(OracleError::NotOnSimplex(format!("weights sum to {sum}")));
        }
        Ok(Allocation { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0);
        let w = F::one() / F::lit(n as f64);
        Allocation { weights: vec![w; n] }
    }

    pub fn unit(n: usize, a: usize) -> Self {
        assert!(a < n);
        let mut weights = vec![F::zero(); n];
        weights[a] = F::one();
        Allocation { weights }
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(1 - n eps) w + eps`: every coordinate at least `eps`. Requires `n eps <= 1`.
    pub fn floored(&self, eps: F) -> Self {
        let n = F::lit(self.weights.len() as f64);
        let keep = F::one() - n * eps;
        Allocation { weights: self.weights.iter().map(|&w| keep * w + eps).collect() }
    }

    /// Normalizes an arbitrary nonnegative vector with positive mass.
    pub(crate) fn normalized(raw: &[F]) -> Self {
        let clamped: Vec<F> = raw.iter().map(|&w| w.max(F::zero())).collect();
        let sum: F = clamped.iter().copied().sum();
        debug_assert!(sum > F::zero());
        Allocation { weights: clamped.into_iter().map(|w| w / sum).collect() }
    }
}

fn sum_tolerance<F: Scalar>(n: usize) -> F {
    F::lit(1e-9).max(F::epsilon() * F::lit(4.0 * n as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution<F> {
    pub allocation: Allocation<F>,
    /// `D*(h; S)` in nats per round.
    pub rate: F,
}

fn check_problem<F: Scalar>(kl: &KlTable<F>, h: usize, opponents: HypSet) -> Result<(), OracleError> {
    let k = kl.num_hypotheses();
    if h >= k {
        return Err(OracleError::OutOfRange { index: h, limit: k });
    }
    if opponents.is_empty() {
        return Err(OracleError::EmptyOpponents);
    }
    if opponents.contains(h) {
        return Err(OracleError::CandidateInOpponents(h));
    }
    if let Some(g) = opponents.iter().find(|&g| g >= k) {
        return Err(OracleError::OutOfRange { index: g, limit: k });
    }
    Ok(())
}

#[inline]
fn weighted_divergence<F: Scalar>(kl: &KlTable<F>, h: usize, g: usize, w: &[F]) -> F {
    w.iter().enumerate().map(|(a, &wa)| wa * kl.get(a, h, g)).sum()
}

fn rate_unchecked<F: Scalar>(kl: &KlTable<F>, h: usize, opponents: HypSet, w: &[F]) -> F {
    opponents
        .iter()
        .map(|g| weighted_divergence(kl, h, g, w))
        .fold(F::infinity(), F::min)
}

/// `f_S(w; h) = min_{g in S} sum_a w_a d_a(h, g)`.
pub fn worst_case_rate<F: Scalar>(
    kl: &KlTable<F>,
    h: usize,
    opponents: HypSet,
    w: &Allocation<F>,
) -> Result<F, OracleError> {
    check_problem(kl, h, opponents)?;
    if w.len() != kl.num_actions() {
        return Err(OracleError::Length { got: w.len(), expected: kl.num_actions() });
    }
    Ok(rate_unchecked(kl, h, opponents, w.weights()))
}

/// `L_S = max_{g in S} max_a d_a(h, g)`, the l1-Lipschitz constant of `f_S`.
pub fn lipschitz_constant<F: Scalar>(kl: &KlTable<F>, h: usize, opponents: HypSet) -> F {
    opponents.iter().map(|g| kl.max_over_actions(h, g)).fold(F::zero(), F::max)
}

/// Exact maximizer of `f_S` over the simplex, via the linear program
///
/// ```text
/// maximize z  s.t.  z - sum_a w_a d_a(h, g) <= 0  (g in S),  sum_a w_a <= 1,  w, z >= 0.
/// ```
///
/// The budget constraint is tight at any optimum with positive value, so this
/// is equivalent to optimizing over the simplex. A single opponent or a single
/// action is solved in closed form.
pub fn oracle_allocation<F: Scalar>(
    kl: &KlTable<F>,
    h: usize,
    opponents: HypSet,
) -> Result<OracleSolution<F>, OracleError> {
    check_problem(kl, h, opponents)?;
    let n_a = kl.num_actions();
    if let Some(g) = opponents.iter().find(|&g| kl.max_over_actions(h, g) <= F::zero()) {
        return Err(OracleError::ZeroRate { h, g });
    }

    let allocation = if opponents.len() == 1 {
        let g = opponents.iter().next().expect("one opponent");
        let best = argmax_first((0..n_a).map(|a| kl.get(a, h, g))).expect("at least one action");
        Allocation::unit(n_a, best)
    } else if n_a == 1 {
        Allocation::unit(1, 0)
    } else {
        let mut c = vec![F::zero(); n_a + 1];
        c[n_a] = F::one();
        let mut rows = Vec::with_capacity(opponents.len() + 1);
        for g in opponents.iter() {
            let mut row: Vec<F> = (0..n_a).map(|a| -kl.get(a, h, g)).collect();
            row.push(F::one());
            rows.push(row);
        }
        let mut budget = vec![F::one(); n_a];
        budget.push(F::zero());
        rows.push(budget);
        let mut rhs = vec![F::zero(); opponents.len()];
        rhs.push(F::one());

        let sol = simplex::maximize(&c, &rows, &rhs)?;
        Allocation::normalized(&sol.x[..n_a])
    };

    let rate = rate_unchecked(kl, h, opponents, allocation.weights());
    if rate <= F::zero() {
        // Unreachable when every opponent is separable; kept as a guard on the LP.
        let g = opponents.iter().next().unwrap_or(h);
        return Err(OracleError::ZeroRate { h, g });
    }
    Ok(OracleSolution { allocation, rate })
}

/// Brute-force maximizer over the grid `{ w : w_a = i_a * step }`, for
/// cross-checking [`oracle_allocation`] on small instances.
///
/// `1 / step` is rounded to the nearest integer resolution. Ties keep the
/// first grid point in lexicographic order.
pub fn grid_oracle<F: Scalar>(
    kl: &KlTable<F>,
    h: usize,
    opponents: HypSet,
    step: f64,
) -> Result<OracleSolution<F>, OracleError> {
    check_problem(kl, h, opponents)?;
    let n_a = kl.num_actions();
    if n_a > 4 {
        return Err(OracleError::GridTooLarge(n_a));
    }
    if !(step > 0.0 && step <= 0.5) {
        return Err(OracleError::BadStep(step));
    }
    let resolution = (1.0 / step).round() as usize;
    let scale = F::lit(resolution as f64);

    let mut counts = vec![0usize; n_a];
    let mut w = vec![F::zero(); n_a];
    let mut best: Option<(Vec<F>, F)> = None;
    enumerate_compositions(&mut counts, 0, resolution, &mut |counts| {
        for (wa, &ca) in w.iter_mut().zip(counts) {
            *wa = F::lit(ca as f64) / scale;
        }
        let r = rate_unchecked(kl, h, opponents, &w);
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((w.clone(), r));
        }
    });
    let (weights, rate) = best.expect("grid is nonempty");
    Ok(OracleSolution { allocation: Allocation { weights }, rate })
}

fn enumerate_compositions(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    visit: &mut impl FnMut(&[usize]),
) {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        visit(counts);
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        enumerate_compositions(counts, pos + 1, remaining - c, visit);
    }
}

/// Trial-local memo of oracle solutions keyed by `(candidate, opponent set)`.
#[derive(Debug, Default)]
pub struct OracleCache<F> {
    entries: HashMap<(usize, HypSet), OracleSolution<F>>,
}

impl<F: Scalar> OracleCache<F> {
    pub fn new() -> Self {
        OracleCache { entries: HashMap::new() }
    }

    pub fn solve(
        &mut self,
        kl: &KlTable<F>,
        h: usize,
        opponents: HypSet,
    ) -> Result<&OracleSolution<F>, OracleError> {
        use std::collections::hash_map::Entry;
        match self.entries.entry((h, opponents)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(v) => Ok(v.insert(oracle_allocation(kl, h, opponents)?)),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
