//! Environments: hypotheses, sensing actions and the Gaussian observation law.
//!
//! An environment is a mean matrix with one row per action and one column per
//! hypothesis, plus a common noise scale. Everything else (densities,
//! divergences, sampling) is derived from it.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Largest supported hypothesis count; subsets are stored as 64-bit masks.
pub const MAX_HYPOTHESES: usize = 64;

/// Names of the built-in environments.
pub const PRESET_NAMES: [&str; 3] = ["skewed", "hard-weak", "degenerate"];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed environment document: {0}")]
    Malformed(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("sigma must be a finite positive number, got {0}")]
    InvalidSigma(f64),
    #[error("hypotheses {h} and {g} have identical means under every action")]
    NotIdentifiable { h: usize, g: usize },
    #[error("unknown environment preset `{0}`")]
    UnknownPreset(String),
    #[error("observation must be finite")]
    NonFiniteObservation,
    #[error("cannot read environment file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A subset of hypothesis indices, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HypSet(u64);

impl HypSet {
    pub const EMPTY: HypSet = HypSet(0);

    pub fn from_bits(bits: u64) -> Self {
        HypSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// `{0, .., n-1} \ {excluded}`.
    pub fn all_except(n: usize, excluded: usize) -> Self {
        assert!(n <= MAX_HYPOTHESES);
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        HypSet(all & !(1u64 << excluded))
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut s = HypSet::EMPTY;
        for i in indices {
            s.insert(i);
        }
        s
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 & (1u64 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        assert!(i < MAX_HYPOTHESES, "hypothesis index {i} exceeds mask width");
        self.0 |= 1u64 << i;
    }

    pub fn remove(&mut self, i: usize) {
        if i < 64 {
            self.0 &= !(1u64 << i);
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: HypSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn difference(self, other: HypSet) -> HypSet {
        HypSet(self.0 & !other.0)
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }
}

impl fmt::Debug for HypSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for HypSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        HypSet::from_indices(iter)
    }
}

/// Action-wise divergences `d_a(h, g)` in nats per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct KlTable<F> {
    num_actions: usize,
    num_hypotheses: usize,
    values: Vec<F>,
}

impl<F: Scalar> KlTable<F> {
    /// Table with arbitrary entries `f(a, h, g)`, for divergence instances that
    /// do not come from a Gaussian mean matrix. Diagonal entries are forced to
    /// zero; entries must be finite and nonnegative.
    pub fn from_fn(
        num_actions: usize,
        num_hypotheses: usize,
        mut f: impl FnMut(usize, usize, usize) -> F,
    ) -> Result<Self, ModelError> {
        if num_actions == 0 || num_hypotheses == 0 || num_hypotheses > MAX_HYPOTHESES {
            return Err(ModelError::DimensionMismatch(format!(
                "unsupported divergence table shape {num_actions}x{num_hypotheses}"
            )));
        }
        let mut values = Vec::with_capacity(num_actions * num_hypotheses * num_hypotheses);
        for a in 0..num_actions {
            for h in 0..num_hypotheses {
                for g in 0..num_hypotheses {
                    let v = if h == g { F::zero() } else { f(a, h, g) };
                    if !(v.is_finite() && v >= F::zero()) {
                        return Err(ModelError::Malformed(format!(
                            "divergence ({a},{h},{g}) must be finite and nonnegative"
                        )));
                    }
                    values.push(v);
                }
            }
        }
        Ok(KlTable { num_actions, num_hypotheses, values })
    }

    #[inline]
    pub fn get(&self, a: usize, h: usize, g: usize) -> F {
        assert!(a < self.num_actions && h < self.num_hypotheses && g < self.num_hypotheses);
        self.values[(a * self.num_hypotheses + h) * self.num_hypotheses + g]
    }

    /// `d_.(h, g)` as a vector over actions.
    pub fn row(&self, h: usize, g: usize) -> Vec<F> {
        (0..self.num_actions).map(|a| self.get(a, h, g)).collect()
    }

    /// `max_a d_a(h, g)`; zero iff no action separates the pair.
    pub fn max_over_actions(&self, h: usize, g: usize) -> F {
        (0..self.num_actions)
            .map(|a| self.get(a, h, g))
            .fold(F::zero(), F::max)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }
}

/// How strictly pairwise identifiability is enforced at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Identifiability {
    /// Every pair of hypotheses must differ under some action.
    #[default]
    Strict,
    /// Indistinguishable pairs are recorded instead of rejected. A trial
    /// still requires its true hypothesis to be separable from all others.
    Relaxed,
}

/// Immutable environment: mean matrix, noise scale and precomputed divergences.
#[derive(Debug, Clone)]
pub struct Environment<F> {
    name: String,
    num_hypotheses: usize,
    num_actions: usize,
    /// Row-major, `means[a * num_hypotheses + h] = mu_{a,h}`.
    means: Vec<F>,
    sigma: F,
    inv_two_sigma_sq: F,
    kl: KlTable<F>,
    indistinguishable: Vec<(usize, usize)>,
}

impl<F: Scalar> Environment<F> {
    /// Builds an environment from rows of means (one row per action).
    pub fn new(name: impl Into<String>, rows: &[Vec<f64>], sigma: f64) -> Result<Self, ModelError> {
        Self::with_identifiability(name, rows, sigma, Identifiability::Strict)
    }

    pub fn with_identifiability(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        sigma: f64,
        mode: Identifiability,
    ) -> Result<Self, ModelError> {
        let num_actions = rows.len();
        if num_actions == 0 {
            return Err(ModelError::DimensionMismatch("no actions (mean matrix is empty)".into()));
        }
        let num_hypotheses = rows[0].len();
        if num_hypotheses == 0 {
            return Err(ModelError::DimensionMismatch("no hypotheses (empty row)".into()));
        }
        if num_hypotheses > MAX_HYPOTHESES {
            return Err(ModelError::DimensionMismatch(format!(
                "{num_hypotheses} hypotheses exceeds the supported maximum of {MAX_HYPOTHESES}"
            )));
        }
        if let Some((a, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != num_hypotheses) {
            return Err(ModelError::DimensionMismatch(format!(
                "row {a} has {} entries, expected {num_hypotheses}",
                row.len()
            )));
        }
        if rows.iter().flatten().any(|m| !m.is_finite()) {
            return Err(ModelError::Malformed("means must be finite".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(ModelError::InvalidSigma(sigma));
        }

        let means: Vec<F> = rows.iter().flatten().map(|&m| F::lit(m)).collect();
        let sigma_f = F::lit(sigma);
        let inv_two_sigma_sq = F::one() / (F::lit(2.0) * sigma_f * sigma_f);

        let mut values = Vec::with_capacity(num_actions * num_hypotheses * num_hypotheses);
        for a in 0..num_actions {
            for h in 0..num_hypotheses {
                for g in 0..num_hypotheses {
                    let gap = means[a * num_hypotheses + h] - means[a * num_hypotheses + g];
                    values.push(gap * gap * inv_two_sigma_sq);
                }
            }
        }
        let kl = KlTable { num_actions, num_hypotheses, values };

        let mut indistinguishable = Vec::new();
        for h in 0..num_hypotheses {
            for g in h + 1..num_hypotheses {
                let separable = (0..num_actions)
                    .any(|a| rows[a][h] != rows[a][g]);
                if !separable {
                    if mode == Identifiability::Strict {
                        return Err(ModelError::NotIdentifiable { h, g });
                    }
                    indistinguishable.push((h, g));
                }
            }
        }

        Ok(Environment {
            name: name.into(),
            num_hypotheses,
            num_actions,
            means,
            sigma: sigma_f,
            inv_two_sigma_sq,
            kl,
            indistinguishable,
        })
    }

    /// One of the built-in environments, see [`PRESET_NAMES`].
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        let (rows, mode) = preset_rows(name).ok_or_else(|| ModelError::UnknownPreset(name.into()))?;
        Self::with_identifiability(name, &rows, 1.0, mode)
    }

    /// Parses an environment document (JSON).
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: EnvDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &EnvDocument) -> Result<Self, ModelError> {
        let rows = doc.rows()?;
        let sigma = doc.sigma.unwrap_or(1.0);
        Self::with_identifiability(doc.name.clone(), &rows, sigma, doc.identifiability)
    }

    /// Resolves a preset name, falling back to reading a document from disk.
    pub fn resolve(name_or_path: &str) -> Result<Self, ModelError> {
        if PRESET_NAMES.contains(&name_or_path) {
            return Self::preset(name_or_path);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(ModelError::UnknownPreset(name_or_path.into()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: name_or_path.into(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_document(&self) -> EnvDocument {
        EnvDocument {
            name: self.name.clone(),
            num_hypotheses: Some(self.num_hypotheses),
            num_actions: Some(self.num_actions),
            means: MeanMatrix::Rows(
                (0..self.num_actions)
                    .map(|a| (0..self.num_hypotheses).map(|h| self.mean(a, h).to_f64_lossy()).collect())
                    .collect(),
            ),
            sigma: Some(self.sigma.to_f64_lossy()),
            identifiability: if self.indistinguishable.is_empty() {
                Identifiability::Strict
            } else {
                Identifiability::Relaxed
            },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_hypotheses(&self) -> usize {
        self.num_hypotheses
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }

    #[inline]
    pub fn mean(&self, a: usize, h: usize) -> F {
        assert!(a < self.num_actions && h < self.num_hypotheses);
        self.means[a * self.num_hypotheses + h]
    }

    pub fn kl_table(&self) -> &KlTable<F> {
        &self.kl
    }

    /// `d_a(h, g) = (mu_{a,h} - mu_{a,g})^2 / (2 sigma^2)`.
    #[inline]
    pub fn kl(&self, a: usize, h: usize, g: usize) -> F {
        self.kl.get(a, h, g)
    }

    /// Pairs `(h, g)`, `h < g`, that no action separates. Empty under strict loading.
    pub fn indistinguishable_pairs(&self) -> &[(usize, usize)] {
        &self.indistinguishable
    }

    /// Whether `h` differs from every other hypothesis under some action.
    pub fn is_separable(&self, h: usize) -> bool {
        !self.indistinguishable.iter().any(|&(x, y)| x == h || y == h)
    }

    /// Log-density of `o` under `(a, h)` without the hypothesis-independent
    /// normalizing constant: `-(o - mu_{a,h})^2 / (2 sigma^2)`.
    pub fn log_density(&self, a: usize, h: usize, o: F) -> Result<F, ModelError> {
        if !o.is_finite() {
            return Err(ModelError::NonFiniteObservation);
        }
        Ok(self.log_density_unchecked(a, h, o))
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, a: usize, h: usize, o: F) -> F {
        let r = o - self.mean(a, h);
        -(r * r) * self.inv_two_sigma_sq
    }

    /// One draw from `Normal(mu_{a,h}, sigma^2)`; consumes one standard normal
    /// variate from `rng`.
    pub fn sample_observation<R: Rng + ?Sized>(&self, a: usize, h: usize, rng: &mut R) -> F {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(a, h) + self.sigma * F::lit(z)
    }
}

/// Mean matrix as nested rows, or flat row-major with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeanMatrix {
    Rows(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

/// On-disk environment document.
///
/// ```json
/// { "name": "toy", "means": [[0.0, 1.0], [0.5, 0.5]], "sigma": 1.0 }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvDocument {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_hypotheses: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_actions: Option<usize>,
    /// Actions as rows, hypotheses as columns.
    pub means: MeanMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub identifiability: Identifiability,
}

impl EnvDocument {
    fn rows(&self) -> Result<Vec<Vec<f64>>, ModelError> {
        let rows = match &self.means {
            MeanMatrix::Rows(rows) => rows.clone(),
            MeanMatrix::Flat(flat) => {
                let (Some(k), Some(n_a)) = (self.num_hypotheses, self.num_actions) else {
                    return Err(ModelError::Malformed(
                        "flat `means` requires `num_hypotheses` and `num_actions`".into(),
                    ));
                };
                if k == 0 || flat.len() != k * n_a {
                    return Err(ModelError::DimensionMismatch(format!(
                        "flat means has {} entries, expected {n_a} x {k}",
                        flat.len()
                    )));
                }
                flat.chunks(k).map(<[f64]>::to_vec).collect()
            }
        };
        if let Some(n_a) = self.num_actions {
            if rows.len() != n_a {
                return Err(ModelError::DimensionMismatch(format!(
                    "num_actions = {n_a} but means has {} rows",
                    rows.len()
                )));
            }
        }
        if let Some(k) = self.num_hypotheses {
            if let Some(r) = rows.iter().find(|r| r.len() != k) {
                return Err(ModelError::DimensionMismatch(format!(
                    "num_hypotheses = {k} but a row has {} entries",
                    r.len()
                )));
            }
        }
        Ok(rows)
    }
}

fn preset_rows(name: &str) -> Option<(Vec<Vec<f64>>, Identifiability)> {
    let rows: [[f64; 5]; 5] = match name {
        "skewed" => [
            [0.5, 0.9, 0.5, 0.3, 0.7],
            [0.3, 0.5, 0.3, 0.5, 0.3],
            [0.5, 0.2, 0.5, 0.3, 0.8],
            [0.7, 0.3, 0.7, 0.1, 0.5],
            [0.4, 0.6, 0.6, 0.4, 0.2],
        ],
        "hard-weak" => [
            [0.9, 0.8, 0.2, 0.2, 0.2],
            [0.8, 0.65, 0.2, 0.2, 0.2],
            [0.1, 0.1, 0.8, 0.1, 0.1],
            [0.2, 0.2, 0.1, 0.8, 0.2],
            [0.1, 0.2, 0.1, 0.2, 0.9],
        ],
        // Hypotheses 3 and 4 coincide under every action.
        "degenerate" => [
            [0.5, 0.9, 0.1, 0.5, 0.5],
            [0.5, 0.1, 0.9, 0.5, 0.5],
            [0.5, 0.5, 0.5, 0.5, 0.5],
            [0.5, 0.5, 0.5, 0.5, 0.5],
            [0.55, 0.45, 0.45, 0.45, 0.45],
        ],
        _ => return None,
    };
    let mode = if name == "degenerate" { Identifiability::Relaxed } else { Identifiability::Strict };
    Some((rows.iter().map(|r| r.to_vec()).collect(), mode))
}
