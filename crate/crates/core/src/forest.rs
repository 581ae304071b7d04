// Weighted random-forest classifiers over mixed categorical/numerical
// features.
//
// Trees are stored as flat pre-order node arrays. A numerical split sends an
// input left iff `value < threshold`; a categorical split sends it left iff
// its category is in the split's subset.

use std::collections::HashSet;
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::Dataset;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("expected {expected} feature values, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("feature {feature} ({name}): {reason}")]
    BadValue {
        feature: usize,
        name: String,
        reason: String,
    },
    #[error("unknown class label `{0}`")]
    UnknownLabel(String),
    #[error("class index {0} out of range")]
    ClassOutOfRange(usize),
    #[error("{location}: {reason}")]
    Invalid { location: String, reason: String },
    #[error("unsupported model format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("training: {0}")]
    Training(String),
}

fn invalid(location: impl Into<String>, reason: impl Into<String>) -> ForestError {
    ForestError::Invalid {
        location: location.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Categorical(Vec<String>),
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mutability {
    Hard,
    Soft,
}

/// Metadata for one input feature. Its index is its position in the
/// feature list.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMeta {
    pub name: String,
    pub kind: FeatureKind,
    pub mutability: Mutability,
}

impl FeatureMeta {
    pub fn numerical(name: &str, mutability: Mutability) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Numerical,
            mutability,
        }
    }

    pub fn categorical(name: &str, categories: &[&str], mutability: Mutability) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical(categories.iter().map(|c| c.to_string()).collect()),
            mutability,
        }
    }

    pub fn is_soft(&self) -> bool {
        self.mutability == Mutability::Soft
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical(cats) => cats.iter().position(|c| c == label),
            FeatureKind::Numerical => None,
        }
    }
}

/// A single feature value. Categories are indices into the feature's
/// category list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Category(usize),
    Number(f64),
}

/// Checks feature metadata invariants: unique names, nonempty duplicate-free
/// category lists.
pub fn validate_features(features: &[FeatureMeta]) -> Result<(), ForestError> {
    if features.is_empty() {
        return Err(invalid("features", "at least one feature is required"));
    }
    let mut names = HashSet::new();
    for (i, f) in features.iter().enumerate() {
        if !names.insert(f.name.as_str()) {
            return Err(invalid(format!("feature {i}"), format!("duplicate name `{}`", f.name)));
        }
        if let FeatureKind::Categorical(cats) = &f.kind {
            if cats.is_empty() {
                return Err(invalid(format!("feature {i}"), "categorical feature without categories"));
            }
            let distinct: HashSet<_> = cats.iter().collect();
            if distinct.len() != cats.len() {
                return Err(invalid(format!("feature {i}"), "duplicate category label"));
            }
        }
    }
    Ok(())
}

/// Checks that `x` matches the arity and kinds of `features`.
pub fn validate_instance(features: &[FeatureMeta], x: &[Value]) -> Result<(), ForestError> {
    if x.len() != features.len() {
        return Err(ForestError::Arity {
            expected: features.len(),
            found: x.len(),
        });
    }
    for (i, (meta, v)) in features.iter().zip(x).enumerate() {
        let bad = |reason: String| ForestError::BadValue {
            feature: i,
            name: meta.name.clone(),
            reason,
        };
        match (&meta.kind, v) {
            (FeatureKind::Categorical(cats), Value::Category(c)) if *c >= cats.len() => {
                return Err(bad(format!("category index {c} outside domain of {}", cats.len())))
            }
            (FeatureKind::Categorical(_), Value::Category(_)) => {}
            (FeatureKind::Numerical, Value::Number(n)) if !n.is_finite() => {
                return Err(bad("non-finite value".into()))
            }
            (FeatureKind::Numerical, Value::Number(_)) => {}
            (FeatureKind::Categorical(_), Value::Number(_)) => {
                return Err(bad("numeric value for categorical feature".into()))
            }
            (FeatureKind::Numerical, Value::Category(_)) => {
                return Err(bad("category for numerical feature".into()))
            }
        }
    }
    Ok(())
}

/// Parses one textual field per feature: category labels for categorical
/// features, decimal numbers for numerical ones.
pub fn parse_instance(features: &[FeatureMeta], fields: &[&str]) -> Result<Vec<Value>, ForestError> {
    if fields.len() != features.len() {
        return Err(ForestError::Arity {
            expected: features.len(),
            found: fields.len(),
        });
    }
    features
        .iter()
        .zip(fields)
        .enumerate()
        .map(|(i, (meta, raw))| {
            let raw = raw.trim();
            match &meta.kind {
                FeatureKind::Categorical(_) => meta.category_index(raw).map(Value::Category).ok_or_else(|| {
                    ForestError::BadValue {
                        feature: i,
                        name: meta.name.clone(),
                        reason: format!("unknown category `{raw}`"),
                    }
                }),
                FeatureKind::Numerical => raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Value::Number)
                    .ok_or_else(|| ForestError::BadValue {
                        feature: i,
                        name: meta.name.clone(),
                        reason: format!("cannot parse `{raw}` as a finite number"),
                    }),
            }
        })
        .collect()
}

/// Renders an instance back to its textual fields.
pub fn format_instance(features: &[FeatureMeta], x: &[Value]) -> Vec<String> {
    features
        .iter()
        .zip(x)
        .map(|(meta, v)| match (v, &meta.kind) {
            (Value::Category(c), FeatureKind::Categorical(cats)) => cats[*c].clone(),
            (Value::Number(n), _) => n.to_string(),
            (Value::Category(c), FeatureKind::Numerical) => c.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitTest {
    /// Left iff value < threshold.
    Below(f64),
    /// Left iff category is in this sorted set.
    InSet(Vec<usize>),
}

/// Recursive tree form, convenient for building trees by hand.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        test: SplitTest,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(usize),
}

impl TreeNode {
    pub fn leaf(class: usize) -> Self {
        TreeNode::Leaf(class)
    }

    pub fn below(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            feature,
            test: SplitTest::Below(threshold),
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn in_set(feature: usize, categories: &[usize], left: TreeNode, right: TreeNode) -> Self {
        let mut cats = categories.to_vec();
        cats.sort_unstable();
        cats.dedup();
        TreeNode::Split {
            feature,
            test: SplitTest::InSet(cats),
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        test: SplitTest,
        left: usize,
        right: usize,
    },
    Leaf {
        class: usize,
    },
}

/// A decision tree as a flat node array rooted at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn from_root(root: TreeNode) -> Self {
        fn flatten(node: TreeNode, out: &mut Vec<Node>) -> usize {
            let me = out.len();
            match node {
                TreeNode::Leaf(class) => out.push(Node::Leaf { class }),
                TreeNode::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    out.push(Node::Leaf { class: 0 });
                    let l = flatten(*left, out);
                    let r = flatten(*right, out);
                    out[me] = Node::Split {
                        feature,
                        test,
                        left: l,
                        right: r,
                    };
                }
            }
            me
        }
        let mut nodes = Vec::new();
        flatten(root, &mut nodes);
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Deterministic descent to a leaf. The input must already be validated.
    pub fn predict(&self, x: &[Value]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class } => return *class,
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let go_left = match (test, x[*feature]) {
                        (SplitTest::Below(t), Value::Number(v)) => v < *t,
                        (SplitTest::InSet(set), Value::Category(c)) => set.binary_search(&c).is_ok(),
                        // Kind mismatches are rejected by validation.
                        _ => false,
                    };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    fn validate(&self, t: usize, features: &[FeatureMeta], n_classes: usize) -> Result<(), ForestError> {
        let loc = |n: usize| format!("tree {t} node {n}");
        if self.nodes.is_empty() {
            return Err(invalid(format!("tree {t}"), "no nodes"));
        }
        let mut referenced = vec![false; self.nodes.len()];
        for (n, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Leaf { class } => {
                    if *class >= n_classes {
                        return Err(invalid(loc(n), format!("leaf class index {class} not in class domain")));
                    }
                }
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    let meta = features
                        .get(*feature)
                        .ok_or_else(|| invalid(loc(n), format!("split feature {feature} out of range")))?;
                    match (test, &meta.kind) {
                        (SplitTest::Below(th), FeatureKind::Numerical) => {
                            if !th.is_finite() {
                                return Err(invalid(loc(n), "non-finite threshold"));
                            }
                        }
                        (SplitTest::InSet(set), FeatureKind::Categorical(cats)) => {
                            if set.is_empty() || set.len() >= cats.len() {
                                return Err(invalid(loc(n), "category subset must be nonempty and proper"));
                            }
                            if set.windows(2).any(|w| w[0] >= w[1]) || set.iter().any(|&c| c >= cats.len()) {
                                return Err(invalid(loc(n), "malformed category subset"));
                            }
                        }
                        _ => return Err(invalid(loc(n), "split test does not match the feature kind")),
                    }
                    for &child in [left, right] {
                        if child <= n || child >= self.nodes.len() {
                            return Err(invalid(loc(n), format!("child index {child} out of order or range")));
                        }
                        if std::mem::replace(&mut referenced[child], true) {
                            return Err(invalid(loc(child), "node has more than one parent"));
                        }
                    }
                }
            }
        }
        if let Some(orphan) = referenced.iter().skip(1).position(|r| !r) {
            return Err(invalid(loc(orphan + 1), "unreachable node"));
        }
        // Numerical tests must strictly narrow the interval along every path.
        let mut stack = vec![(0usize, vec![(f64::NEG_INFINITY, f64::INFINITY); features.len()])];
        while let Some((n, bounds)) = stack.pop() {
            if let Node::Split {
                feature,
                test,
                left,
                right,
            } = &self.nodes[n]
            {
                if let SplitTest::Below(th) = test {
                    let (lo, hi) = bounds[*feature];
                    if !(lo < *th && *th < hi) {
                        return Err(invalid(
                            loc(n),
                            format!("threshold {th} does not narrow the interval [{lo}, {hi}) on this path"),
                        ));
                    }
                    let mut lb = bounds.clone();
                    lb[*feature].1 = *th;
                    let mut rb = bounds;
                    rb[*feature].0 = *th;
                    stack.push((*left, lb));
                    stack.push((*right, rb));
                } else {
                    stack.push((*left, bounds.clone()));
                    stack.push((*right, bounds));
                }
            }
        }
        Ok(())
    }
}

/// A weighted ensemble of decision trees. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    features: Vec<FeatureMeta>,
    classes: Vec<String>,
    trees: Vec<Tree>,
    weights: Vec<f64>,
}

impl RandomForest {
    pub fn new(
        features: Vec<FeatureMeta>,
        classes: Vec<String>,
        trees: Vec<(f64, Tree)>,
    ) -> Result<Self, ForestError> {
        validate_features(&features)?;
        if classes.is_empty() {
            return Err(invalid("classes", "class domain is empty"));
        }
        let distinct: HashSet<_> = classes.iter().collect();
        if distinct.len() != classes.len() {
            return Err(invalid("classes", "duplicate class label"));
        }
        if trees.is_empty() {
            return Err(invalid("trees", "a forest needs at least one tree"));
        }
        let (weights, trees): (Vec<f64>, Vec<Tree>) = trees.into_iter().unzip();
        for (t, (w, tree)) in weights.iter().zip(&trees).enumerate() {
            if !(w.is_finite() && *w > 0.0) {
                return Err(invalid(format!("tree {t}"), format!("weight {w} is not a positive finite number")));
            }
            tree.validate(t, &features, classes.len())?;
        }
        Ok(Self {
            features,
            classes,
            trees,
            weights,
        })
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn class_index(&self, label: &str) -> Result<usize, ForestError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ForestError::UnknownLabel(label.to_string()))
    }

    /// Weighted vote share of class `c`.
    pub fn class_proba(&self, x: &[Value], c: usize) -> Result<f64, ForestError> {
        if c >= self.classes.len() {
            return Err(ForestError::ClassOutOfRange(c));
        }
        validate_instance(&self.features, x)?;
        Ok(self.class_proba_unchecked(x, c))
    }

    /// [`class_proba`](Self::class_proba) without input validation.
    pub fn class_proba_unchecked(&self, x: &[Value], c: usize) -> f64 {
        let mut hit = 0.0;
        let mut total = 0.0;
        for (tree, w) in self.trees.iter().zip(&self.weights) {
            if tree.predict(x) == c {
                hit += w;
            }
            total += w;
        }
        hit / total
    }

    /// Full probability vector in class-domain order.
    pub fn proba(&self, x: &[Value]) -> Result<Vec<f64>, ForestError> {
        validate_instance(&self.features, x)?;
        let mut votes = vec![0.0; self.classes.len()];
        for (tree, w) in self.trees.iter().zip(&self.weights) {
            votes[tree.predict(x)] += w;
        }
        let total: f64 = self.weights.iter().sum();
        Ok(votes.into_iter().map(|v| v / total).collect())
    }

    /// Argmax class index; ties go to the earliest class in declaration order.
    pub fn predict(&self, x: &[Value]) -> Result<usize, ForestError> {
        let p = self.proba(x)?;
        let mut best = 0;
        for (c, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = c;
            }
        }
        Ok(best)
    }

    /// Number of split nodes per feature, summed over all trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.features.len()];
        for tree in &self.trees {
            for node in tree.nodes() {
                if let Node::Split { feature, .. } = node {
                    counts[*feature] += 1;
                }
            }
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file(None)).expect("model serialization cannot fail")
    }

    /// Serializes the model together with an audit copy of its partition
    /// thresholds.
    pub fn to_json_with_partitions(&self) -> String {
        let table = crate::discretize::PartitionTable::build(self);
        let parts = (0..self.features.len()).map(|i| table.thresholds(i).to_vec()).collect();
        serde_json::to_string_pretty(&self.to_file(Some(parts))).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let file: ModelFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    /// Hex SHA-256 of the canonical (compact, partition-free) serialization.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&self.to_file(None)).expect("model serialization cannot fail");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn to_file(&self, partitions: Option<Vec<Vec<f64>>>) -> ModelFile {
        let features = self
            .features
            .iter()
            .map(|f| FeatureDto {
                name: f.name.clone(),
                kind: match f.kind {
                    FeatureKind::Categorical(_) => KindDto::Categorical,
                    FeatureKind::Numerical => KindDto::Numerical,
                },
                categories: match &f.kind {
                    FeatureKind::Categorical(c) => Some(c.clone()),
                    FeatureKind::Numerical => None,
                },
                mutability: f.mutability,
            })
            .collect();
        let trees = self
            .trees
            .iter()
            .zip(&self.weights)
            .map(|(tree, w)| TreeDto {
                weight: *w,
                nodes: tree
                    .nodes
                    .iter()
                    .map(|n| match n {
                        Node::Leaf { class } => NodeDto {
                            leaf: Some(self.classes[*class].clone()),
                            ..NodeDto::default()
                        },
                        Node::Split {
                            feature,
                            test,
                            left,
                            right,
                        } => {
                            let (threshold, categories) = match test {
                                SplitTest::Below(t) => (Some(*t), None),
                                SplitTest::InSet(set) => {
                                    let FeatureKind::Categorical(cats) = &self.features[*feature].kind else {
                                        unreachable!("validated split kind")
                                    };
                                    (None, Some(set.iter().map(|&c| cats[c].clone()).collect()))
                                }
                            };
                            NodeDto {
                                feature: Some(*feature),
                                threshold,
                                categories,
                                left: Some(*left),
                                right: Some(*right),
                                leaf: None,
                            }
                        }
                    })
                    .collect(),
            })
            .collect();
        ModelFile {
            format_version: FORMAT_VERSION,
            classes: self.classes.clone(),
            features,
            trees,
            partitions,
        }
    }

    fn from_file(file: ModelFile) -> Result<Self, ForestError> {
        if file.format_version != FORMAT_VERSION {
            return Err(ForestError::Version(file.format_version));
        }
        let mut features = Vec::with_capacity(file.features.len());
        for (i, f) in file.features.into_iter().enumerate() {
            let kind = match (f.kind, f.categories) {
                (KindDto::Categorical, Some(c)) => FeatureKind::Categorical(c),
                (KindDto::Categorical, None) => {
                    return Err(invalid(format!("feature {i}"), "categorical feature without `categories`"))
                }
                (KindDto::Numerical, None) => FeatureKind::Numerical,
                (KindDto::Numerical, Some(_)) => {
                    return Err(invalid(format!("feature {i}"), "numerical feature with `categories`"))
                }
            };
            features.push(FeatureMeta {
                name: f.name,
                kind,
                mutability: f.mutability,
            });
        }
        validate_features(&features)?;
        let mut trees = Vec::with_capacity(file.trees.len());
        for (t, tree) in file.trees.into_iter().enumerate() {
            let mut nodes = Vec::with_capacity(tree.nodes.len());
            for (n, node) in tree.nodes.into_iter().enumerate() {
                let loc = format!("tree {t} node {n}");
                let parsed = match node {
                    NodeDto {
                        leaf: Some(label),
                        feature: None,
                        threshold: None,
                        categories: None,
                        left: None,
                        right: None,
                    } => {
                        let class = file
                            .classes
                            .iter()
                            .position(|c| *c == label)
                            .ok_or_else(|| invalid(&loc, format!("leaf label `{label}` is not in classes")))?;
                        Node::Leaf { class }
                    }
                    NodeDto {
                        leaf: None,
                        feature: Some(feature),
                        threshold,
                        categories,
                        left: Some(left),
                        right: Some(right),
                    } => {
                        let test = match (threshold, categories) {
                            (Some(t), None) => SplitTest::Below(t),
                            (None, Some(labels)) => {
                                let meta = features
                                    .get(feature)
                                    .ok_or_else(|| invalid(&loc, format!("split feature {feature} out of range")))?;
                                let mut set = Vec::with_capacity(labels.len());
                                for l in &labels {
                                    set.push(
                                        meta.category_index(l)
                                            .ok_or_else(|| invalid(&loc, format!("unknown category `{l}`")))?,
                                    );
                                }
                                set.sort_unstable();
                                if set.windows(2).any(|w| w[0] == w[1]) {
                                    return Err(invalid(&loc, "duplicate category in split subset"));
                                }
                                SplitTest::InSet(set)
                            }
                            _ => return Err(invalid(&loc, "split needs exactly one of `threshold` or `categories`")),
                        };
                        Node::Split {
                            feature,
                            test,
                            left,
                            right,
                        }
                    }
                    _ => return Err(invalid(&loc, "node must be either a leaf or a split")),
                };
                nodes.push(parsed);
            }
            trees.push((tree.weight, Tree { nodes }));
        }
        let forest = Self::new(features, file.classes, trees)?;
        if let Some(parts) = file.partitions {
            let table = crate::discretize::PartitionTable::build(&forest);
            let derived: Vec<Vec<f64>> = (0..forest.features.len()).map(|i| table.thresholds(i).to_vec()).collect();
            if parts != derived {
                return Err(invalid("partitions", "embedded partition table disagrees with the trees"));
            }
        }
        Ok(forest)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    classes: Vec<String>,
    features: Vec<FeatureDto>,
    trees: Vec<TreeDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    partitions: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDto {
    Categorical,
    Numerical,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDto {
    name: String,
    kind: KindDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
    mutability: Mutability,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDto {
    weight: f64,
    nodes: Vec<NodeDto>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<String>,
}

impl fmt::Display for RandomForest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RandomForest({} trees, {} features, classes {:?})",
            self.trees.len(),
            self.features.len(),
            self.classes
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub n_trees: usize,
    /// Bootstrap sample size per tree; must be below the dataset size.
    pub sample_size: usize,
    /// Features considered per split.
    pub mtry: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl TrainParams {
    /// Common defaults: `sqrt(M)` features per split and a bootstrap of
    /// `N - 1` samples.
    pub fn for_dataset(data: &Dataset, n_trees: usize, seed: u64) -> Self {
        let m = data.features.len();
        Self {
            n_trees,
            sample_size: data.len().saturating_sub(1).max(1),
            mtry: ((m as f64).sqrt().floor() as usize).max(1),
            max_depth: 12,
            min_leaf: 1,
            seed,
        }
    }
}

/// Breiman-style training: per tree, a bootstrap sample followed by an
/// un-pruned CART tree splitting on the best of `mtry` random features by
/// Gini impurity. All tree weights are 1.
pub fn train_forest(data: &Dataset, params: &TrainParams) -> Result<RandomForest, ForestError> {
    let n = data.len();
    let m = data.features.len();
    if n < 2 {
        return Err(ForestError::Training(format!("need at least 2 samples, got {n}")));
    }
    if params.n_trees == 0 || params.mtry == 0 || params.max_depth == 0 || params.min_leaf == 0 {
        return Err(ForestError::Training("tree count, mtry, max_depth and min_leaf must be positive".into()));
    }
    if params.sample_size == 0 || params.sample_size >= n {
        return Err(ForestError::Training(format!(
            "bootstrap size must satisfy 0 < n_k < N (n_k = {}, N = {n})",
            params.sample_size
        )));
    }
    if params.mtry > m {
        return Err(ForestError::Training(format!("mtry {} exceeds feature count {m}", params.mtry)));
    }
    let n_classes = data.classes.len();
    let distinct: HashSet<_> = data.labels.iter().collect();
    if distinct.len() < 2 {
        log::warn!("training data has a single class; every tree will be a single leaf");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let rows: Vec<usize> = (0..params.sample_size).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = CartBuilder {
            data,
            params,
            n_classes,
            rng: &mut rng,
        };
        let root = builder.grow(rows, 0);
        trees.push((1.0, Tree::from_root(root)));
    }
    RandomForest::new(data.features.clone(), data.classes.clone(), trees)
}

struct CartBuilder<'a, R: Rng> {
    data: &'a Dataset,
    params: &'a TrainParams,
    n_classes: usize,
    rng: &'a mut R,
}

struct Candidate {
    impurity: f64,
    feature: usize,
    test: SplitTest,
}

fn gini_mass(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    // total * gini = total - sum(c^2)/total
    t - sq / t
}

impl<R: Rng> CartBuilder<'_, R> {
    fn majority(&self, rows: &[usize]) -> (usize, Vec<usize>) {
        let mut counts = vec![0; self.n_classes];
        for &r in rows {
            counts[self.data.labels[r]] += 1;
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            if counts[c] > counts[best] {
                best = c;
            }
        }
        (best, counts)
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let (label, counts) = self.majority(&rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return TreeNode::Leaf(label);
        }
        let parent = gini_mass(&counts, rows.len());
        let m = self.data.features.len();
        let mut picked = sample(self.rng, m, self.params.mtry).into_vec();
        picked.sort_unstable();
        let mut best: Option<Candidate> = None;
        for f in picked {
            let cand = match self.data.features[f].kind {
                FeatureKind::Numerical => self.best_numeric(&rows, f),
                FeatureKind::Categorical(ref cats) => self.best_categorical(&rows, f, cats.len()),
            };
            if let Some(c) = cand {
                if best.as_ref().is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best.filter(|b| b.impurity < parent - 1e-12) else {
            return TreeNode::Leaf(label);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
            match (&split.test, self.data.rows[r][split.feature]) {
                (SplitTest::Below(t), Value::Number(v)) => v < *t,
                (SplitTest::InSet(s), Value::Category(c)) => s.contains(&c),
                _ => false,
            }
        });
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            test: split.test,
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    fn best_numeric(&self, rows: &[usize], f: usize) -> Option<Candidate> {
        let mut vals: Vec<(f64, usize)> = rows
            .iter()
            .map(|&r| match self.data.rows[r][f] {
                Value::Number(v) => (v, self.data.labels[r]),
                Value::Category(_) => unreachable!("validated dataset"),
            })
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = vals.len();
        let mut left = vec![0; self.n_classes];
        let mut right = vec![0; self.n_classes];
        for &(_, y) in &vals {
            right[y] += 1;
        }
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        for i in 0..total - 1 {
            let y = vals[i].1;
            left[y] += 1;
            right[y] -= 1;
            let (a, b) = (vals[i].0, vals[i + 1].0);
            if a == b || i + 1 < min_leaf || total - i - 1 < min_leaf {
                continue;
            }
            let imp = gini_mass(&left, i + 1) + gini_mass(&right, total - i - 1);
            if best.as_ref().is_none_or(|c| imp < c.impurity) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold <= a {
                    threshold = b;
                }
                best = Some(Candidate {
                    impurity: imp,
                    feature: f,
                    test: SplitTest::Below(threshold),
                });
            }
        }
        best
    }

    fn best_categorical(&self, rows: &[usize], f: usize, n_cats: usize) -> Option<Candidate> {
        let mut per_cat = vec![vec![0usize; self.n_classes]; n_cats];
        let mut sizes = vec![0usize; n_cats];
        let mut all = vec![0usize; self.n_classes];
        for &r in rows {
            let Value::Category(c) = self.data.rows[r][f] else {
                unreachable!("validated dataset")
            };
            per_cat[c][self.data.labels[r]] += 1;
            sizes[c] += 1;
            all[self.data.labels[r]] += 1;
        }
        let total = rows.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Candidate> = None;
        // One-vs-rest subsets.
        for c in 0..n_cats {
            let nl = sizes[c];
            if nl < min_leaf || total - nl < min_leaf || nl == 0 || nl == total {
                continue;
            }
            let rest: Vec<usize> = all.iter().zip(&per_cat[c]).map(|(a, b)| a - b).collect();
            let imp = gini_mass(&per_cat[c], nl) + gini_mass(&rest, total - nl);
            if best.as_ref().is_none_or(|b| imp < b.impurity) {
                best = Some(Candidate {
                    impurity: imp,
                    feature: f,
                    test: SplitTest::InSet(vec![c]),
                });
            }
        }
        best
    }
}
