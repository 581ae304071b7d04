use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::forest::{validate_instance, FeatureKind, ForestError, Node, RandomForest, SplitTest, Value};

/// A discrete state: one partition index per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn new(indices: Vec<usize>) -> Self {
        State(indices)
    }
}

impl Deref for State {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for State {
    fn from(v: Vec<usize>) -> Self {
        State(v)
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, z) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Partition {
    /// Sorted distinct thresholds `b_1 < ... < b_n`, giving `n + 1` half-open
    /// cells `(-inf, b_1), [b_1, b_2), ..., [b_n, +inf)`.
    Numerical(Vec<f64>),
    Categorical(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    parts: Vec<Partition>,
}

impl PartitionTable {
    /// Harvests every numerical threshold from every tree.
    pub fn build(forest: &RandomForest) -> Self {
        let mut parts: Vec<Partition> = forest
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Categorical(c) => Partition::Categorical(c.len()),
                FeatureKind::Numerical => Partition::Numerical(Vec::new()),
            })
            .collect();
        for tree in forest.trees() {
            for node in tree.nodes() {
                if let Node::Split {
                    feature,
                    test: SplitTest::Below(t),
                    ..
                } = node
                {
                    if let Partition::Numerical(v) = &mut parts[*feature] {
                        v.push(*t);
                    }
                }
            }
        }
        for p in &mut parts {
            if let Partition::Numerical(v) = p {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
        }
        Self { parts }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Number of partitions `n_i` of feature `i`.
    pub fn count(&self, i: usize) -> usize {
        match &self.parts[i] {
            Partition::Numerical(t) => t.len() + 1,
            Partition::Categorical(n) => *n,
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.parts.len()).map(|i| self.count(i)).collect()
    }

    pub fn is_numerical(&self, i: usize) -> bool {
        matches!(self.parts[i], Partition::Numerical(_))
    }

    /// Thresholds of a numerical feature; empty for categorical ones.
    pub fn thresholds(&self, i: usize) -> &[f64] {
        match &self.parts[i] {
            Partition::Numerical(t) => t,
            Partition::Categorical(_) => &[],
        }
    }

    /// Total number of states, saturating at `u128::MAX`.
    pub fn state_count(&self) -> u128 {
        self.counts()
            .into_iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n as u128))
    }

    pub fn is_valid_state(&self, s: &State) -> bool {
        s.len() == self.parts.len() && s.iter().enumerate().all(|(i, &z)| z < self.count(i))
    }

    /// Partition index of a single numerical value.
    pub fn numeric_index(&self, i: usize, v: f64) -> usize {
        self.thresholds(i).partition_point(|b| *b <= v)
    }

    /// Maps a validated feature vector to its state.
    pub fn to_state(&self, forest: &RandomForest, x: &[Value]) -> Result<State, ForestError> {
        validate_instance(forest.features(), x)?;
        Ok(self.to_state_unchecked(x))
    }

    pub fn to_state_unchecked(&self, x: &[Value]) -> State {
        State(
            x.iter()
                .enumerate()
                .map(|(i, v)| match v {
                    Value::Category(c) => *c,
                    Value::Number(n) => self.numeric_index(i, *n),
                })
                .collect(),
        )
    }

    /// A canonical vector inside every partition of `s`: the midpoint of a
    /// bounded cell, `b_1 - 1` below the first threshold and `b_n + 1` above
    /// the last.
    pub fn representative(&self, s: &State) -> Vec<Value> {
        s.iter()
            .enumerate()
            .map(|(i, &z)| match &self.parts[i] {
                Partition::Categorical(_) => Value::Category(z),
                Partition::Numerical(t) => Value::Number(representative_point(t, z)),
            })
            .collect()
    }

    /// Enumerates every state in lexicographic order.
    pub fn all_states(&self) -> impl Iterator<Item = State> + '_ {
        let counts = self.counts();
        let total = self.state_count();
        let mut cur = vec![0usize; counts.len()];
        let mut done = total == 0;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let out = State(cur.clone());
            done = true;
            for i in (0..cur.len()).rev() {
                cur[i] += 1;
                if cur[i] < counts[i] {
                    done = false;
                    break;
                }
                cur[i] = 0;
            }
            Some(out)
        })
    }
}

fn representative_point(t: &[f64], z: usize) -> f64 {
    if t.is_empty() {
        return 0.0;
    }
    if z == 0 {
        let b = t[0];
        let v = b - 1.0;
        return if v < b { v } else { b - b.abs() };
    }
    if z == t.len() {
        let b = t[z - 1];
        let v = b + 1.0;
        return if v > b { v } else { b + b.abs() };
    }
    let (a, b) = (t[z - 1], t[z]);
    let mid = a + (b - a) / 2.0;
    if mid < b {
        mid
    } else {
        a
    }
}

/// `p(y = c | s)`, the forest's vote share for `c` at the state's
/// representative point.
pub fn state_proba(forest: &RandomForest, table: &PartitionTable, s: &State, c: usize) -> f64 {
    forest.class_proba_unchecked(&table.representative(s), c)
}
