#![allow(dead_code)]

use std::collections::HashMap;

use forestplan::discretize::{state_proba, PartitionTable, State};
use forestplan::encoder::SasProblem;
use forestplan::forest::{FeatureKind, FeatureMeta, Mutability, RandomForest, Tree, TreeNode};
use forestplan::sas::{action_mutex, Action, ActionLibrary, CostModel, Transition};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Bounds for [`random_forest`].
#[derive(Debug, Clone, Copy)]
pub struct ForestShape {
    pub max_features: usize,
    pub max_partitions: usize,
    pub max_trees: usize,
    pub max_depth: usize,
}

impl Default for ForestShape {
    fn default() -> Self {
        Self {
            max_features: 6,
            max_partitions: 4,
            max_trees: 7,
            max_depth: 3,
        }
    }
}

fn random_node(
    rng: &mut ChaCha8Rng,
    features: &[FeatureMeta],
    sizes: &[usize],
    bounds: &mut Vec<(usize, usize)>,
    depth: usize,
    max_depth: usize,
) -> TreeNode {
    let leaf = |rng: &mut ChaCha8Rng| TreeNode::leaf(rng.gen_bool(0.4) as usize);
    if depth >= max_depth || (depth > 0 && rng.gen_bool(0.2)) {
        return leaf(rng);
    }
    let f = rng.gen_range(0..features.len());
    match &features[f].kind {
        FeatureKind::Numerical => {
            // Thresholds are the integers 1..n-1; only those strictly inside
            // the interval reached so far keep the path narrowing.
            let (lo, hi) = bounds[f];
            if hi - lo < 2 {
                return leaf(rng);
            }
            let k = rng.gen_range(lo + 1..hi);
            let saved = bounds[f];
            bounds[f] = (lo, k);
            let left = random_node(rng, features, sizes, bounds, depth + 1, max_depth);
            bounds[f] = (k, hi);
            let right = random_node(rng, features, sizes, bounds, depth + 1, max_depth);
            bounds[f] = saved;
            TreeNode::below(f, k as f64, left, right)
        }
        FeatureKind::Categorical(cats) => {
            let n = cats.len();
            let mask = rng.gen_range(1..(1u32 << n) - 1);
            let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let left = random_node(rng, features, sizes, bounds, depth + 1, max_depth);
            let right = random_node(rng, features, sizes, bounds, depth + 1, max_depth);
            TreeNode::in_set(f, &set, left, right)
        }
    }
}

/// A random two-class forest in which every feature is split at least once.
pub fn random_forest(rng: &mut ChaCha8Rng, shape: ForestShape) -> RandomForest {
    loop {
        let m = rng.gen_range(2..=shape.max_features.max(2));
        let hard = rng.gen_bool(0.3).then(|| rng.gen_range(0..m));
        let mut features = Vec::new();
        let mut sizes = Vec::new();
        for i in 0..m {
            let n = rng.gen_range(2..=shape.max_partitions.max(2));
            let mutability = if Some(i) == hard { Mutability::Hard } else { Mutability::Soft };
            let name = format!("f{i}");
            if rng.gen_bool(0.25) {
                let cats: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
                let refs: Vec<&str> = cats.iter().map(String::as_str).collect();
                features.push(FeatureMeta::categorical(&name, &refs, mutability));
            } else {
                features.push(FeatureMeta::numerical(&name, mutability));
            }
            sizes.push(n);
        }
        let d = rng.gen_range(1..=shape.max_trees);
        let trees = (0..d)
            .map(|_| {
                let mut bounds: Vec<(usize, usize)> = sizes.iter().map(|&n| (0, n)).collect();
                let root = random_node(rng, &features, &sizes, &mut bounds, 0, shape.max_depth);
                (1.0, Tree::from_root(root))
            })
            .collect();
        let forest = RandomForest::new(features, vec!["0".into(), "1".into()], trees).unwrap();
        if forest.split_counts().iter().all(|&c| c > 0) {
            return forest;
        }
    }
}

/// Default library with `β_j` drawn uniformly from `[1, 100]`.
pub fn random_library(forest: &RandomForest, table: &PartitionTable, rng: &mut ChaCha8Rng) -> ActionLibrary {
    let costs = CostModel::random(table.len(), 1.0, 100.0, rng);
    ActionLibrary::default_library(table, forest.features(), &costs)
}

/// States below the threshold for the target class.
pub fn non_goal_states(forest: &RandomForest, table: &PartitionTable, target: usize, z: f64) -> Vec<State> {
    table
        .all_states()
        .filter(|s| state_proba(forest, table, s, target) < z)
        .collect()
}

/// A random SAS+ problem with up to 3 variables of domain up to 3, up to 6
/// actions with integer costs, and up to 3 goal states.
pub fn random_sas(rng: &mut ChaCha8Rng) -> SasProblem {
    let m = rng.gen_range(1..=3);
    let domains: Vec<usize> = (0..m).map(|_| rng.gen_range(1..=3)).collect();
    let n_actions = rng.gen_range(1..=6);
    let mut actions = Vec::new();
    while actions.len() < n_actions {
        let k = rng.gen_range(1..=3);
        let mut ts = Vec::new();
        for _ in 0..k {
            let var = rng.gen_range(0..m);
            let to = rng.gen_range(0..domains[var]);
            let t = if rng.gen_bool(0.2) {
                Transition::mechanical(var, to)
            } else {
                Transition::regular(var, rng.gen_range(0..domains[var]), to)
            };
            ts.push(t);
        }
        let cost = rng.gen_range(1..=20) as f64;
        if let Ok(a) = Action::new(format!("a{}", actions.len()), ts, cost) {
            actions.push(a);
        }
    }
    let random_state = |rng: &mut ChaCha8Rng| State(domains.iter().map(|&n| rng.gen_range(0..n)).collect());
    let initial = random_state(rng);
    let goals = (0..rng.gen_range(1..=3)).map(|_| random_state(rng)).collect();
    SasProblem::new(domains, actions, initial, goals).unwrap()
}

/// Every set of pairwise non-mutex actions, as index lists.
pub fn compatible_sets(sas: &SasProblem) -> Vec<Vec<usize>> {
    let n = sas.actions.len();
    (0u32..1 << n)
        .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>())
        .filter(|set| {
            set.iter().enumerate().all(|(k, &a)| {
                set[k + 1..]
                    .iter()
                    .all(|&b| !action_mutex(&sas.actions[a], &sas.actions[b]))
            })
        })
        .collect()
}

/// Minimum total cost over all plans of at most `l` steps that end in a
/// goal, by dynamic programming over states and compatible action sets.
pub fn brute_force_cost(sas: &SasProblem, l: usize) -> Option<u64> {
    let sets = compatible_sets(sas);
    let mut frontier: HashMap<State, u64> = HashMap::from([(sas.initial.clone(), 0)]);
    for _ in 0..l {
        let mut next: HashMap<State, u64> = HashMap::new();
        for (s, c) in &frontier {
            for set in &sets {
                if !set.iter().all(|&a| sas.actions[a].applicable(s)) {
                    continue;
                }
                let mut t = s.clone();
                for &a in set {
                    for tr in sas.actions[a].transitions() {
                        t.0[tr.var] = tr.to;
                    }
                }
                let cost = c + set.iter().map(|&a| sas.actions[a].cost() as u64).sum::<u64>();
                let e = next.entry(t).or_insert(u64::MAX);
                *e = (*e).min(cost);
            }
        }
        frontier = next;
    }
    sas.goals.iter().filter_map(|g| frontier.get(g).copied()).min()
}

pub fn shuffle<T>(v: &mut [T], rng: &mut ChaCha8Rng) {
    v.shuffle(rng);
}
