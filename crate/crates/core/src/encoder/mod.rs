mod encode;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::discretize::{state_proba, PartitionTable, State};
use crate::forest::RandomForest;
use crate::knn::{k_nearest, SimilarityWeights};
use crate::maxsat::{solve, MaxSatError, SolveOptions, SolveStatus};
use crate::offline::{find_preferred_goal, GoalDatabase, SearchParams};
use crate::sas::{action_mutex, Action, ActionLibrary};

pub use encode::{action_weight, decode, encode, Encoding, VarKind, VarMap, WEIGHT_SCALE};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("makespan must be at least 1")]
    ZeroMakespan,
    #[error("invalid problem: {0}")]
    Problem(String),
    #[error(transparent)]
    MaxSat(#[from] MaxSatError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanViolation {
    #[error("step {step}: unknown action #{action}")]
    UnknownAction { step: usize, action: usize },
    #[error("step {step}: actions `{a}` and `{b}` are mutually exclusive")]
    Mutex { step: usize, a: String, b: String },
    #[error("step {step}: action `{action}` is not applicable in {state}")]
    NotApplicable { step: usize, action: String, state: State },
    #[error("final state {0} is not a goal")]
    MissedGoal(State),
    #[error("plan reports cost {reported} but its actions cost {actual}")]
    Cost { reported: f64, actual: f64 },
}

/// A SAS+ planning problem whose goal set is a list of full states.
#[derive(Debug, Clone, PartialEq)]
pub struct SasProblem {
    pub domains: Vec<usize>,
    pub actions: Vec<Action>,
    pub initial: State,
    pub goals: Vec<State>,
}

impl SasProblem {
    /// Validates ranges and drops duplicate goals, keeping first occurrences.
    pub fn new(domains: Vec<usize>, actions: Vec<Action>, initial: State, goals: Vec<State>) -> Result<Self, EncodeError> {
        let bad = |m: String| Err(EncodeError::Problem(m));
        if domains.contains(&0) {
            return bad("every variable needs a nonempty domain".into());
        }
        let in_range = |s: &State| s.len() == domains.len() && s.iter().zip(&domains).all(|(v, n)| v < n);
        if !in_range(&initial) {
            return bad(format!("initial state {initial} out of range"));
        }
        let mut uniq: Vec<State> = Vec::new();
        for g in goals {
            if !in_range(&g) {
                return bad(format!("goal {g} out of range"));
            }
            if !uniq.contains(&g) {
                uniq.push(g);
            }
        }
        for a in &actions {
            for t in a.transitions() {
                if t.var >= domains.len() || t.to >= domains[t.var] || t.from.is_some_and(|f| f >= domains[t.var]) {
                    return bad(format!("action `{}` has out-of-range transition {t}", a.id()));
                }
            }
        }
        Ok(Self {
            domains,
            actions,
            initial,
            goals: uniq,
        })
    }
}

/// A sequence of parallel action steps (indices into the problem's actions).
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub steps: Vec<Vec<usize>>,
    pub cost: f64,
    /// State reached after the last step.
    pub reached: State,
}

impl Plan {
    pub fn from_steps(steps: Vec<Vec<usize>>, sas: &SasProblem) -> Self {
        let cost = steps.iter().flatten().map(|&a| sas.actions[a].cost()).sum();
        let reached = encode::run(&sas.initial, &steps, sas);
        Self { steps, cost, reached }
    }

    pub fn empty(initial: &State) -> Self {
        Self {
            steps: Vec::new(),
            cost: 0.0,
            reached: initial.clone(),
        }
    }

    pub fn makespan(&self) -> usize {
        self.steps.len()
    }

    pub fn action_count(&self) -> usize {
        self.steps.iter().map(Vec::len).sum()
    }

    /// Integer cost in solver weight units.
    pub fn weight(&self, sas: &SasProblem) -> u64 {
        self.steps.iter().flatten().map(|&a| action_weight(sas.actions[a].cost())).sum()
    }
}

/// Re-executes the plan: every step must be pairwise non-mutex and
/// applicable, the last state must be a goal, and the cost must add up.
pub fn validate_plan(plan: &Plan, sas: &SasProblem) -> Result<(), PlanViolation> {
    let mut s = sas.initial.clone();
    for (i, step) in plan.steps.iter().enumerate() {
        let step_no = i + 1;
        for &a in step {
            if a >= sas.actions.len() {
                return Err(PlanViolation::UnknownAction { step: step_no, action: a });
            }
        }
        for (k, &a) in step.iter().enumerate() {
            let act = &sas.actions[a];
            if !act.applicable(&s) {
                return Err(PlanViolation::NotApplicable {
                    step: step_no,
                    action: act.id().to_string(),
                    state: s,
                });
            }
            for &b in &step[k + 1..] {
                if a == b || action_mutex(act, &sas.actions[b]) {
                    return Err(PlanViolation::Mutex {
                        step: step_no,
                        a: act.id().to_string(),
                        b: sas.actions[b].id().to_string(),
                    });
                }
            }
        }
        let mut next = s.clone();
        for &a in step {
            for t in sas.actions[a].transitions() {
                next.0[t.var] = t.to;
            }
        }
        s = next;
    }
    if !sas.goals.contains(&s) {
        return Err(PlanViolation::MissedGoal(s));
    }
    let actual: f64 = plan.steps.iter().flatten().map(|&a| sas.actions[a].cost()).sum();
    if (actual - plan.cost).abs() > 1e-9 * actual.abs().max(1.0) {
        return Err(PlanViolation::Cost {
            reported: plan.cost,
            actual,
        });
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("unsolvable: {0}")]
    Unsolvable(String),
    #[error("solver timed out at makespan {makespan}")]
    Timeout {
        makespan: usize,
        incumbent: Option<Box<Plan>>,
    },
    #[error("decoded plan is invalid: {0}")]
    InvalidPlan(#[from] PlanViolation),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl From<MaxSatError> for PlanError {
    fn from(e: MaxSatError) -> Self {
        PlanError::Encode(EncodeError::MaxSat(e))
    }
}

/// Everything an online query reads; all of it is shared and immutable.
#[derive(Clone, Copy)]
pub struct Online<'a> {
    pub forest: &'a RandomForest,
    pub table: &'a PartitionTable,
    pub lib: &'a ActionLibrary,
    pub db: Option<&'a GoalDatabase>,
    pub weights: &'a SimilarityWeights,
    pub search: &'a SearchParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanParams {
    /// Neighbors whose preferred goals form the goal set.
    pub k: usize,
    pub max_makespan: usize,
    /// Keep solving up to `max_makespan` and return the cheapest plan
    /// instead of the first one found.
    pub sweep: bool,
    /// Budget for the whole query.
    pub timeout: Option<Duration>,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            k: 3,
            max_makespan: 10,
            sweep: false,
            timeout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalSource {
    Neighbors,
    /// No neighbor qualified; the goal came from a fresh search.
    Search,
}

/// The SAS+ problem for `initial`: goals are the preferred goals of its `k`
/// nearest database neighbors, or the result of a direct search when there
/// are none.
pub fn build_sas(ctx: &Online, initial: &State, k: usize) -> Result<(SasProblem, GoalSource), PlanError> {
    let mut goals = Vec::new();
    let mut source = GoalSource::Neighbors;
    if let Some(db) = ctx.db {
        let features = ctx.forest.features();
        for n in k_nearest(initial, db, k.max(1), ctx.weights, features, ctx.table) {
            goals.extend(n.entry.goal.clone());
        }
    }
    if goals.is_empty() {
        source = GoalSource::Search;
        let out = find_preferred_goal(initial, ctx.lib, ctx.forest, ctx.table, ctx.search);
        match out.entry.goal {
            Some(g) => goals.push(g),
            None => return Err(PlanError::Unsolvable(format!("no goal state is reachable from {initial}"))),
        }
    }
    for g in &goals {
        if !ctx.table.is_valid_state(g) {
            return Err(PlanError::Unsolvable(format!("database goal {g} does not fit the partition table")));
        }
        let p = state_proba(ctx.forest, ctx.table, g, ctx.search.target);
        if p < ctx.search.z {
            return Err(PlanError::Unsolvable(format!(
                "database goal {g} has probability {p} below {}",
                ctx.search.z
            )));
        }
    }
    let sas = SasProblem::new(ctx.table.counts(), ctx.lib.actions().to_vec(), initial.clone(), goals)?;
    Ok((sas, source))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub plan: Plan,
    /// Makespan bound of the encoding that produced the plan; 0 when the
    /// initial state already is a goal.
    pub makespan: usize,
    pub goals: Vec<State>,
    pub source: Option<GoalSource>,
}

/// Solves the problem at `L = 1, 2, ...` up to the bound. Returns the
/// optimal plan at the first satisfiable makespan, or with `sweep` the
/// cheapest plan over all makespans.
pub fn solve_sas(sas: &SasProblem, params: &PlanParams) -> Result<(Plan, usize), PlanError> {
    if sas.goals.contains(&sas.initial) {
        return Ok((Plan::empty(&sas.initial), 0));
    }
    let deadline = params.timeout.map(|t| Instant::now() + t);
    let mut best: Option<(u64, Plan, usize)> = None;
    for l in 1..=params.max_makespan {
        let remaining = match deadline {
            Some(d) => {
                let now = Instant::now();
                if now >= d {
                    return Err(PlanError::Timeout {
                        makespan: l,
                        incumbent: best.map(|b| Box::new(b.1)),
                    });
                }
                Some(d - now)
            }
            None => None,
        };
        let enc = encode(sas, l)?;
        let result = solve(&enc.wcnf, SolveOptions { timeout: remaining });
        match result.status {
            SolveStatus::HardUnsat => continue,
            SolveStatus::Timeout => {
                return Err(PlanError::Timeout {
                    makespan: l,
                    incumbent: best.map(|b| Box::new(b.1)),
                })
            }
            SolveStatus::Optimal => {
                let model = result.model.expect("optimal result has a model");
                let plan = decode(&model, &enc.vars, sas);
                validate_plan(&plan, sas)?;
                let w = result.cost.expect("optimal result has a cost");
                debug_assert_eq!(w, plan.weight(sas));
                if !params.sweep {
                    return Ok((plan, l));
                }
                if best.as_ref().is_none_or(|b| w < b.0) {
                    best = Some((w, plan, l));
                }
            }
        }
    }
    match best {
        Some((_, plan, l)) => Ok((plan, l)),
        None => Err(PlanError::Unsolvable(format!(
            "no plan reaches any of {} goal states within makespan {}",
            sas.goals.len(),
            params.max_makespan
        ))),
    }
}

/// Answers one query end to end.
pub fn plan(ctx: &Online, initial: &State, params: &PlanParams) -> Result<PlanOutcome, PlanError> {
    if state_proba(ctx.forest, ctx.table, initial, ctx.search.target) >= ctx.search.z {
        return Ok(PlanOutcome {
            plan: Plan::empty(initial),
            makespan: 0,
            goals: vec![initial.clone()],
            source: None,
        });
    }
    let (sas, source) = build_sas(ctx, initial, params.k)?;
    let (plan, makespan) = solve_sas(&sas, params)?;
    Ok(PlanOutcome {
        plan,
        makespan,
        goals: sas.goals,
        source: Some(source),
    })
}
