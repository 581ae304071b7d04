use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{state_proba, PartitionTable, State};
use crate::forest::RandomForest;
use crate::sas::ActionLibrary;

pub const DEFAULT_PATIENCE: u64 = 10_000_000;
pub const DEFAULT_NODE_BUDGET: u64 = 5_000_000;
pub const DEFAULT_Z: f64 = 0.5;

/// Heuristic scale: a fixed value, or the mean action cost of the library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Auto,
    Value(f64),
}

impl Alpha {
    pub fn resolve(self, lib: &ActionLibrary) -> f64 {
        match self {
            Alpha::Auto => lib.mean_cost(),
            Alpha::Value(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    /// Target class index.
    pub target: usize,
    /// Probability threshold a goal state must reach.
    pub z: f64,
    pub alpha: f64,
    /// Expansions allowed without improving the incumbent goal.
    pub patience: u64,
    /// Hard cap on expansions.
    pub node_budget: u64,
}

impl SearchParams {
    pub fn new(target: usize, z: f64, alpha: f64) -> Self {
        Self {
            target,
            z,
            alpha,
            patience: DEFAULT_PATIENCE,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.z > 0.0 && self.z <= 1.0) {
            return Err(format!("z = {} must lie in (0, 1]", self.z));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(format!("alpha = {} must be non-negative", self.alpha));
        }
        if self.patience == 0 {
            return Err("patience must be at least 1".into());
        }
        Ok(())
    }
}

/// `α (z - p)` below the threshold, zero at or above it.
pub fn heuristic_from_proba(p: f64, params: &SearchParams) -> f64 {
    if p < params.z {
        params.alpha * (params.z - p)
    } else {
        0.0
    }
}

pub fn heuristic(s: &State, params: &SearchParams, forest: &RandomForest, table: &PartitionTable) -> f64 {
    heuristic_from_proba(state_proba(forest, table, s, params.target), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    /// The open list ran dry; the goal is the best reachable under this search.
    ProvedExhausted,
    PatienceStop,
    BudgetStop,
    NoGoal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferredGoalEntry {
    pub initial: State,
    pub goal: Option<State>,
    pub cost: Option<f64>,
    /// Closed-list size when the goal was found.
    pub expansions: u64,
    pub status: SearchStatus,
}

impl PreferredGoalEntry {
    pub fn cost_or_inf(&self) -> f64 {
        self.cost.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub entry: PreferredGoalEntry,
    /// Action indices (into the library) from the initial state to the goal.
    pub path: Vec<usize>,
    /// Total closed states at termination.
    pub closed: u64,
}

#[derive(Debug, Clone)]
struct OpenEntry {
    f: f64,
    g: f64,
    p: f64,
    state: State,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // Reversed so that `BinaryHeap` pops the smallest (f, g, state).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.state.cmp(&self.state))
    }
}

/// Best-first search on `f = g + h` from `start`. Goal states are recorded
/// but never expanded; the search stops once `patience` expansions pass
/// without improving the best goal, when `node_budget` states are closed, or
/// when the open list empties.
pub fn find_preferred_goal(
    start: &State,
    lib: &ActionLibrary,
    forest: &RandomForest,
    table: &PartitionTable,
    params: &SearchParams,
) -> SearchOutcome {
    let proba = |s: &State| state_proba(forest, table, s, params.target);
    let mut open = BinaryHeap::new();
    let mut best_g: HashMap<State, f64> = HashMap::new();
    let mut parent: HashMap<State, (State, usize)> = HashMap::new();
    let mut closed: HashSet<State> = HashSet::new();

    let p0 = proba(start);
    best_g.insert(start.clone(), 0.0);
    open.push(OpenEntry {
        f: heuristic_from_proba(p0, params),
        g: 0.0,
        p: p0,
        state: start.clone(),
    });

    let mut goal: Option<(State, f64, Vec<usize>)> = None;
    let mut n_es = 0u64;
    let mut status = None;

    while let Some(cur) = open.pop() {
        if closed.contains(&cur.state) || best_g.get(&cur.state).is_some_and(|&g| cur.g > g) {
            continue;
        }
        let is_goal = cur.p >= params.z;
        if is_goal && goal.as_ref().is_none_or(|(_, g, _)| cur.g < *g) {
            n_es = closed.len() as u64;
            let path = trace_path(&parent, start, &cur.state);
            goal = Some((cur.state.clone(), cur.g, path));
        }
        if closed.len() as u64 - n_es > params.patience {
            status = Some(SearchStatus::PatienceStop);
            break;
        }
        if is_goal {
            continue;
        }
        if closed.len() as u64 >= params.node_budget {
            status = Some(SearchStatus::BudgetStop);
            break;
        }
        closed.insert(cur.state.clone());
        for edge in lib.neighbors(&cur.state) {
            if closed.contains(&edge.target) {
                continue;
            }
            let g = cur.g + edge.cost;
            if best_g.get(&edge.target).is_some_and(|&old| old <= g) {
                continue;
            }
            best_g.insert(edge.target.clone(), g);
            parent.insert(edge.target.clone(), (cur.state.clone(), edge.action));
            let p = proba(&edge.target);
            open.push(OpenEntry {
                f: g + heuristic_from_proba(p, params),
                g,
                p,
                state: edge.target,
            });
        }
    }

    let closed_count = closed.len() as u64;
    match goal {
        Some((state, cost, path)) => SearchOutcome {
            entry: PreferredGoalEntry {
                initial: start.clone(),
                goal: Some(state),
                cost: Some(cost),
                expansions: n_es,
                status: status.unwrap_or(SearchStatus::ProvedExhausted),
            },
            path,
            closed: closed_count,
        },
        None => SearchOutcome {
            entry: PreferredGoalEntry {
                initial: start.clone(),
                goal: None,
                cost: None,
                expansions: closed_count,
                status: SearchStatus::NoGoal,
            },
            path: Vec::new(),
            closed: closed_count,
        },
    }
}

fn trace_path(parent: &HashMap<State, (State, usize)>, start: &State, end: &State) -> Vec<usize> {
    let mut path = Vec::new();
    let mut cur = end;
    while cur != start {
        let (prev, action) = &parent[cur];
        path.push(*action);
        cur = prev;
    }
    path.reverse();
    path
}

/// Picks `round(r% * total)` distinct states uniformly at random (at least
/// one), returned in lexicographic order.
pub fn sample_states(table: &PartitionTable, percent: f64, seed: u64) -> Vec<State> {
    let total = table.state_count();
    let want = ((percent.clamp(0.0, 100.0) / 100.0) * total as f64).round().max(1.0) as u128;
    let want = want.min(total);
    let counts = table.counts();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<State> = if want == total && total <= 50_000_000 {
        table.all_states().collect()
    } else if total <= 50_000_000 {
        sample(&mut rng, total as usize, want as usize)
            .into_iter()
            .map(|k| decode_index(k as u128, &counts))
            .collect()
    } else {
        let mut seen = HashSet::new();
        while (seen.len() as u128) < want {
            let s = State(counts.iter().map(|&n| rng.gen_range(0..n)).collect());
            seen.insert(s);
        }
        seen.into_iter().collect()
    };
    out.sort();
    out
}

fn decode_index(mut k: u128, counts: &[usize]) -> State {
    let mut z = vec![0; counts.len()];
    for i in (0..counts.len()).rev() {
        let n = counts[i] as u128;
        z[i] = (k % n) as usize;
        k /= n;
    }
    State(z)
}

#[derive(Debug, Error)]
pub enum DbError {
    #[error("forest fingerprint mismatch: database built for {found}, expected {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("database parameters differ: {0}")]
    Params(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Search(String),
}

/// Parameters a database was built with, recorded in its header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbParams {
    pub target: String,
    pub z: f64,
    pub alpha: f64,
    pub patience: u64,
    pub node_budget: u64,
    /// Fingerprint of the action library searched over.
    pub library: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbHeader {
    pub fingerprint: String,
    pub params: DbParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalDatabase {
    header: DbHeader,
    entries: BTreeMap<State, PreferredGoalEntry>,
}

impl GoalDatabase {
    pub fn new(header: DbHeader) -> Self {
        Self {
            header,
            entries: BTreeMap::new(),
        }
    }

    pub fn header(&self) -> &DbHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, s: &State) -> Option<&PreferredGoalEntry> {
        self.entries.get(s)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PreferredGoalEntry> {
        self.entries.values()
    }

    /// Inserts an entry; on a key conflict the lower path cost wins.
    pub fn insert(&mut self, entry: PreferredGoalEntry) {
        match self.entries.get(&entry.initial) {
            Some(old) if old.cost_or_inf() <= entry.cost_or_inf() => {}
            _ => {
                self.entries.insert(entry.initial.clone(), entry);
            }
        }
    }

    pub fn check_forest(&self, forest: &RandomForest) -> Result<(), DbError> {
        let expected = forest.fingerprint();
        if self.header.fingerprint != expected {
            return Err(DbError::Fingerprint {
                expected,
                found: self.header.fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Union of two shards built for the same forest and parameters.
    pub fn merge(&mut self, other: GoalDatabase) -> Result<(), DbError> {
        if other.header.fingerprint != self.header.fingerprint {
            return Err(DbError::Fingerprint {
                expected: self.header.fingerprint.clone(),
                found: other.header.fingerprint,
            });
        }
        if other.header.params != self.header.params {
            return Err(DbError::Params(format!(
                "{:?} vs {:?}",
                self.header.params, other.header.params
            )));
        }
        for e in other.entries.into_values() {
            self.insert(e);
        }
        Ok(())
    }

    /// JSON-lines: header line, then one entry per line in key order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), DbError> {
        writeln!(w, "{}", serde_json::to_string(&self.header).expect("header serializes"))?;
        for e in self.entries.values() {
            writeln!(w, "{}", serde_json::to_string(e).expect("entry serializes"))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 json")
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, DbError> {
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                None => {
                    return Err(DbError::Parse {
                        line: 1,
                        message: "missing header line".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str::<DbHeader>(&line).map_err(|e| DbError::Parse {
                        line: i + 1,
                        message: format!("header: {e}"),
                    })?;
                }
            }
        };
        let mut db = GoalDatabase::new(header);
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: PreferredGoalEntry = serde_json::from_str(&line).map_err(|e| DbError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if entry.status != SearchStatus::NoGoal && (entry.goal.is_none() || entry.cost.is_none()) {
                return Err(DbError::Parse {
                    line: i + 1,
                    message: "entry with a goal status lacks goal or cost".into(),
                });
            }
            if db.entries.contains_key(&entry.initial) {
                return Err(DbError::Parse {
                    line: i + 1,
                    message: format!("duplicate entry for state {}", entry.initial),
                });
            }
            db.entries.insert(entry.initial.clone(), entry);
        }
        Ok(db)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, DbError> {
        Self::read(text.as_bytes())
    }
}

/// Runs an independent search for every state on a pool of `workers`
/// threads and collects the results into a database.
pub fn preprocess(
    states: &[State],
    lib: &ActionLibrary,
    forest: &RandomForest,
    table: &PartitionTable,
    params: &SearchParams,
    workers: usize,
) -> Result<GoalDatabase, DbError> {
    params.validate().map_err(DbError::Search)?;
    if let Some(bad) = states.iter().find(|s| !table.is_valid_state(s)) {
        return Err(DbError::Search(format!("state {bad} is outside the partition table")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| DbError::Search(e.to_string()))?;
    let entries: Vec<PreferredGoalEntry> = pool.install(|| {
        states
            .par_iter()
            .map(|s| find_preferred_goal(s, lib, forest, table, params).entry)
            .collect()
    });
    let mut db = GoalDatabase::new(DbHeader {
        fingerprint: forest.fingerprint(),
        params: DbParams {
            target: forest.classes()[params.target].clone(),
            z: params.z,
            alpha: params.alpha,
            patience: params.patience,
            node_budget: params.node_budget,
            library: lib.fingerprint(),
        },
    });
    for e in entries {
        db.insert(e);
    }
    Ok(db)
}
