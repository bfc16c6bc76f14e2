use crate::model::{Environment, HypSet};
use crate::oracle::Allocation;
use crate::scalar::{argmax_first, Scalar};

use super::{thresholds, EngineError, PolicyConfig};

/// Mutable record of one trial.
///
/// Log-likelihood ratios are never stored; `Z_t(h, g)` is always recomputed as
/// `L_t(h) - L_t(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialState<F> {
    t: u64,
    counts: Vec<u64>,
    loglik: Vec<F>,
    /// Cumulative target actually tracked (after the exploration floor).
    target: Vec<F>,
    /// Cumulative unfloored oracle target.
    raw_target: Vec<F>,
    active: Vec<HypSet>,
    champion: usize,
}

impl<F: Scalar> TrialState<F> {
    pub fn new(env: &Environment<F>) -> Self {
        let k = env.num_hypotheses();
        let n_a = env.num_actions();
        TrialState {
            t: 0,
            counts: vec![0; n_a],
            loglik: vec![F::zero(); k],
            target: vec![F::zero(); n_a],
            raw_target: vec![F::zero(); n_a],
            active: (0..k).map(|i| HypSet::all_except(k, i)).collect(),
            champion: 0,
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn loglik(&self) -> &[F] {
        &self.loglik
    }

    /// Cumulative tracking target `W^tar(t)`.
    pub fn target(&self) -> &[F] {
        &self.target
    }

    /// Cumulative oracle target before the exploration floor is applied.
    pub fn raw_target(&self) -> &[F] {
        &self.raw_target
    }

    /// Active-opponent set `G_t(i)`.
    pub fn active(&self, i: usize) -> HypSet {
        self.active[i]
    }

    pub fn champion(&self) -> usize {
        self.champion
    }

    pub fn num_hypotheses(&self) -> usize {
        self.loglik.len()
    }

    /// Empirical allocation `N(t) / t` (zeros at `t = 0`).
    pub fn empirical_allocation(&self) -> Vec<F> {
        if self.t == 0 {
            return vec![F::zero(); self.counts.len()];
        }
        let t = F::lit(self.t as f64);
        self.counts.iter().map(|&n| F::lit(n as f64) / t).collect()
    }

    /// Adds `log p_a(o | h)` to every hypothesis, advances `t`, recomputes the
    /// champion (lowest index on ties).
    pub fn update_likelihoods(&mut self, env: &Environment<F>, a: usize, o: F) {
        for (h, l) in self.loglik.iter_mut().enumerate() {
            *l = *l + env.log_density_unchecked(a, h, o);
        }
        self.counts[a] += 1;
        self.t += 1;
        self.champion = argmax_first(self.loglik.iter().copied()).expect("at least one hypothesis");
    }

    #[inline]
    pub(crate) fn z(&self, h: usize, g: usize) -> F {
        self.loglik[h] - self.loglik[g]
    }

    /// `Z_t(h, g) = L_t(h) - L_t(g)`.
    pub fn llr(&self, h: usize, g: usize) -> Result<F, EngineError> {
        let k = self.loglik.len();
        for i in [h, g] {
            if i >= k {
                return Err(EngineError::HypothesisOutOfRange { index: i, limit: k });
            }
        }
        if h == g {
            return Err(EngineError::SameHypothesis(h));
        }
        Ok(self.z(h, g))
    }

    /// `min_{g in S} Z_t(h, g)`; `None` for an empty set.
    pub fn min_llr(&self, h: usize, set: HypSet) -> Option<F> {
        set.iter().map(|g| self.z(h, g)).reduce(F::min)
    }

    /// C-Tracking: adds `target_now` to the cumulative target and returns the
    /// action with the largest deficit `W^tar_a - N_a` (lowest index on ties).
    pub fn ctrack_select(&mut self, target_now: &Allocation<F>) -> usize {
        assert_eq!(target_now.len(), self.target.len());
        self.accumulate_and_select(target_now.weights().iter().copied())
    }

    pub(crate) fn accumulate_and_select(&mut self, target_now: impl Iterator<Item = F>) -> usize {
        for (w, u) in self.target.iter_mut().zip(target_now) {
            *w = *w + u;
        }
        argmax_first(self.target.iter().zip(&self.counts).map(|(&w, &n)| w - F::lit(n as f64)))
            .expect("at least one action")
    }

    pub(crate) fn record_raw_target(&mut self, u: &Allocation<F>) {
        for (w, &x) in self.raw_target.iter_mut().zip(u.weights()) {
            *w = *w + x;
        }
    }

    /// Removes from the champion's active set every opponent whose evidence
    /// reached the elimination threshold at the current round. Other
    /// candidates' sets are untouched.
    pub fn eliminate(&mut self, cfg: &PolicyConfig<F>) -> HypSet {
        let beta = thresholds(self.t.max(1), cfg).elim;
        let i = self.champion;
        let removed: HypSet = self.active[i].iter().filter(|&g| self.z(i, g) >= beta).collect();
        self.active[i] = self.active[i].difference(removed);
        removed
    }

    /// Rival `argmin_{g != champion} Z(champion, g)`, then the action with the
    /// largest divergence between champion and rival. Lowest index on ties.
    pub fn greedy_select(&self, env: &Environment<F>) -> usize {
        let h = self.champion;
        let rival = (0..self.num_hypotheses())
            .filter(|&g| g != h)
            .map(|g| (g, self.z(h, g)))
            .fold(None, |best: Option<(usize, F)>, (g, z)| match best {
                Some((_, bz)) if z >= bz => best,
                _ => Some((g, z)),
            });
        match rival {
            Some((g, _)) => argmax_first((0..env.num_actions()).map(|a| env.kl(a, h, g)))
                .expect("at least one action"),
            None => 0,
        }
    }
}
