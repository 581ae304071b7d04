use std::cmp::Ordering;

use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::discretize::{PartitionTable, State};
use crate::forest::{FeatureMeta, RandomForest};
use crate::offline::{GoalDatabase, PreferredGoalEntry};

pub trait SimValue:
    Copy
    + PartialOrd
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn from_count(n: usize) -> Self;
}

impl SimValue for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }
}

impl SimValue for Ratio<i64> {
    fn from_count(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }
}

/// Per-feature weights `φ_i`, non-negative and not all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityWeights<T = f64>(Vec<T>);

impl<T: SimValue> SimilarityWeights<T> {
    pub fn new(phi: Vec<T>) -> Result<Self, String> {
        if phi.iter().any(|w| *w < T::zero()) {
            return Err("similarity weights must be non-negative".into());
        }
        let total = phi.iter().fold(T::zero(), |a, b| a + *b);
        if total <= T::zero() {
            return Err("similarity weights must not all be zero".into());
        }
        Ok(Self(phi))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![T::one(); m])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl SimilarityWeights<f64> {
    /// Normalized split frequency of each feature across the forest; uniform
    /// when the forest has no splits at all.
    pub fn from_split_frequency(forest: &RandomForest) -> Self {
        let counts = forest.split_counts();
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Self::uniform(counts.len());
        }
        Self(counts.into_iter().map(|c| c as f64 / total as f64).collect())
    }
}

/// `ξ_i`: equality for categorical features, `1 - |p - p'| / (n_i - 1)` for
/// numerical ones, and 1 for a numerical feature with a single partition.
pub fn feature_similarity<T: SimValue>(s: &State, t: &State, i: usize, table: &PartitionTable) -> T {
    let (a, b) = (s[i], t[i]);
    if table.is_numerical(i) {
        let n = table.count(i);
        if n <= 1 {
            return T::one();
        }
        T::one() - T::from_count(a.abs_diff(b)) / T::from_count(n - 1)
    } else if a == b {
        T::one()
    } else {
        T::zero()
    }
}

/// Zero on any hard-feature partition mismatch, else the `φ`-weighted mean
/// of the feature similarities.
pub fn state_similarity<T: SimValue>(
    s: &State,
    t: &State,
    weights: &SimilarityWeights<T>,
    features: &[FeatureMeta],
    table: &PartitionTable,
) -> T {
    if features.iter().enumerate().any(|(i, f)| !f.is_soft() && s[i] != t[i]) {
        return T::zero();
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, w) in weights.0.iter().enumerate() {
        num = num + *w * feature_similarity::<T>(s, t, i, table);
        den = den + *w;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor<'a> {
    pub similarity: f64,
    pub entry: &'a PreferredGoalEntry,
}

/// The `k` database entries with a goal most similar to `query`, most
/// similar first; ties prefer the cheaper goal, then the smaller state.
/// Zero-similarity entries are never returned, so the result may be empty.
pub fn k_nearest<'a>(
    query: &State,
    db: &'a GoalDatabase,
    k: usize,
    weights: &SimilarityWeights<f64>,
    features: &[FeatureMeta],
    table: &PartitionTable,
) -> Vec<Neighbor<'a>> {
    let mut scored: Vec<Neighbor<'a>> = db
        .entries()
        .filter(|e| e.goal.is_some())
        .map(|e| Neighbor {
            similarity: state_similarity(query, &e.initial, weights, features, table),
            entry: e,
        })
        .filter(|n| n.similarity > 0.0)
        .collect();
    scored.sort_by(|a, b| {
        b.similarity
            .partial_cmp(&a.similarity)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.entry.cost_or_inf().total_cmp(&b.entry.cost_or_inf()))
            .then_with(|| a.entry.initial.cmp(&b.entry.initial))
    });
    scored.truncate(k);
    scored
}
