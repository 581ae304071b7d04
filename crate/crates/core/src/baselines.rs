use std::cmp::{Ordering, Reverse};
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{state_proba, PartitionTable, State};
use crate::encoder::{Plan, SasProblem};
use crate::forest::RandomForest;
use crate::offline::SearchParams;
use crate::sas::ActionLibrary;

pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

/// A plan applying one library action at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialPlan {
    pub actions: Vec<usize>,
    pub cost: f64,
    pub reached: State,
}

impl SequentialPlan {
    /// The same plan with one action per step, for `validate_plan`.
    pub fn to_plan(&self, sas: &SasProblem) -> Plan {
        Plan::from_steps(self.actions.iter().map(|&a| vec![a]).collect(), sas)
    }
}

/// How greedy ranks the applicable actions that raise the probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GreedyRule {
    /// Largest probability gain per unit cost.
    #[default]
    Ratio,
    MaxGain,
    MinCost,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("greedy search stalled at {} with cost {} before reaching the threshold", .partial.reached, .partial.cost)]
pub struct GreedyFailure {
    pub partial: SequentialPlan,
}

/// Repeatedly applies the best-ranked action that strictly increases
/// `p(y=c|s)` until the threshold is met. Ties go to the earlier action.
pub fn greedy_plan(
    start: &State,
    lib: &ActionLibrary,
    forest: &RandomForest,
    table: &PartitionTable,
    params: &SearchParams,
    rule: GreedyRule,
) -> Result<SequentialPlan, GreedyFailure> {
    let proba = |s: &State| state_proba(forest, table, s, params.target);
    let mut plan = SequentialPlan {
        actions: Vec::new(),
        cost: 0.0,
        reached: start.clone(),
    };
    let mut p = proba(start);
    while p < params.z {
        let mut best: Option<(f64, usize, State, f64)> = None;
        for edge in lib.neighbors(&plan.reached) {
            let q = proba(&edge.target);
            let gain = q - p;
            if gain <= 0.0 {
                continue;
            }
            let score = match rule {
                GreedyRule::Ratio => gain / edge.cost,
                GreedyRule::MaxGain => gain,
                GreedyRule::MinCost => -edge.cost,
            };
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, edge.action, edge.target, q));
            }
        }
        let Some((_, action, target, q)) = best else {
            return Err(GreedyFailure { partial: plan });
        };
        plan.actions.push(action);
        plan.cost += lib.get(action).cost();
        plan.reached = target;
        p = q;
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle explored more than {cap} states")]
    CapExceeded { cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Cheapest path from `start` to any state with `p(y=c|s) >= z`, or `None`
/// when no such state is reachable.
pub fn oracle_plan(
    start: &State,
    lib: &ActionLibrary,
    forest: &RandomForest,
    table: &PartitionTable,
    params: &SearchParams,
    cap: usize,
) -> Result<Option<SequentialPlan>, OracleError> {
    let mut dist: HashMap<State, f64> = HashMap::new();
    let mut parent: HashMap<State, (State, usize)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start.clone(), 0.0);
    heap.push(Reverse((Dist(0.0), start.clone())));
    while let Some(Reverse((Dist(d), s))) = heap.pop() {
        if dist.get(&s).is_some_and(|&best| d > best) {
            continue;
        }
        if state_proba(forest, table, &s, params.target) >= params.z {
            let mut actions = Vec::new();
            let mut cur = &s;
            while let Some((prev, a)) = parent.get(cur) {
                actions.push(*a);
                cur = prev;
            }
            actions.reverse();
            return Ok(Some(SequentialPlan {
                actions,
                cost: d,
                reached: s,
            }));
        }
        for edge in lib.neighbors(&s) {
            let nd = d + edge.cost;
            match dist.entry(edge.target.clone()) {
                Entry::Occupied(mut o) => {
                    if nd >= *o.get() {
                        continue;
                    }
                    o.insert(nd);
                }
                Entry::Vacant(v) => {
                    v.insert(nd);
                    if dist.len() > cap {
                        return Err(OracleError::CapExceeded { cap });
                    }
                }
            }
            parent.insert(edge.target.clone(), (s.clone(), edge.action));
            heap.push(Reverse((Dist(nd), edge.target)));
        }
    }
    Ok(None)
}
