use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::discretize::{PartitionTable, State};
use crate::forest::{FeatureKind, FeatureMeta};

#[derive(Debug, Error, PartialEq)]
pub enum SasError {
    #[error("action `{action}`: transitions {a} and {b} are mutually exclusive")]
    InternalMutex { action: String, a: Transition, b: Transition },
    #[error("action `{action}` changes hard feature `{feature}`")]
    HardFeature { action: String, feature: String },
    #[error("action `{action}`: cost {cost} must be positive and finite")]
    Cost { action: String, cost: f64 },
    #[error("action `{action}` has no transitions")]
    Empty { action: String },
    #[error("action `{action}`: {reason}")]
    Range { action: String, reason: String },
    #[error("duplicate action id `{0}`")]
    DuplicateId(String),
    #[error("line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error("action `{action}` is not applicable to state {state}")]
    NotApplicable { action: String, state: State },
    #[error("actions `{a}` and `{b}` are mutually exclusive")]
    ActionMutex { a: String, b: String },
}

/// A single-variable value change. `from == None` is a mechanical
/// transition that applies from any value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Transition {
    pub var: usize,
    pub from: Option<usize>,
    pub to: usize,
}

impl Transition {
    pub fn regular(var: usize, from: usize, to: usize) -> Self {
        Self {
            var,
            from: Some(from),
            to,
        }
    }

    pub fn mechanical(var: usize, to: usize) -> Self {
        Self { var, from: None, to }
    }

    pub fn is_mechanical(&self) -> bool {
        self.from.is_none()
    }

    pub fn is_prevailing(&self) -> bool {
        self.from == Some(self.to)
    }

    pub fn applicable(&self, s: &[usize]) -> bool {
        self.from.is_none_or(|f| s[self.var] == f)
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.from {
            Some(from) => write!(f, "v{}:{}->{}", self.var, from, self.to),
            None => write!(f, "v{}:*->{}", self.var, self.to),
        }
    }
}

/// Two distinct transitions on the same variable are compatible only when
/// at least one is mechanical and both reach the same value.
pub fn transition_mutex(a: &Transition, b: &Transition) -> bool {
    if a == b || a.var != b.var {
        return false;
    }
    !((a.is_mechanical() || b.is_mechanical()) && a.to == b.to)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    id: String,
    transitions: Vec<Transition>,
    cost: f64,
}

impl Action {
    pub fn new(id: impl Into<String>, mut transitions: Vec<Transition>, cost: f64) -> Result<Self, SasError> {
        let id = id.into();
        if transitions.is_empty() {
            return Err(SasError::Empty { action: id });
        }
        if !(cost.is_finite() && cost > 0.0) {
            return Err(SasError::Cost { action: id, cost });
        }
        transitions.sort();
        transitions.dedup();
        for (i, a) in transitions.iter().enumerate() {
            for b in &transitions[i + 1..] {
                if transition_mutex(a, b) {
                    return Err(SasError::InternalMutex {
                        action: id,
                        a: *a,
                        b: *b,
                    });
                }
            }
        }
        Ok(Self { id, transitions, cost })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn applicable(&self, s: &[usize]) -> bool {
        self.transitions.iter().all(|t| t.applicable(s))
    }

    /// `s ⊕ a`.
    pub fn apply(&self, s: &State) -> Result<State, SasError> {
        if !self.applicable(s) {
            return Err(SasError::NotApplicable {
                action: self.id.clone(),
                state: s.clone(),
            });
        }
        Ok(self.apply_unchecked(s))
    }

    pub fn apply_unchecked(&self, s: &State) -> State {
        let mut next = s.clone();
        for t in &self.transitions {
            next.0[t.var] = t.to;
        }
        next
    }

    /// Variables whose value this action may change.
    pub fn changed_vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.transitions.iter().filter(|t| !t.is_prevailing()).map(|t| t.var)
    }
}

/// Actions conflict when they share a non-prevailing transition or hold a
/// mutually exclusive transition pair.
pub fn action_mutex(a: &Action, b: &Action) -> bool {
    for x in &a.transitions {
        for y in &b.transitions {
            if x == y && !x.is_prevailing() {
                return true;
            }
            if transition_mutex(x, y) {
                return true;
            }
        }
    }
    false
}

/// `s ⊕ P` for a set of pairwise non-mutex actions, each applicable to `s`.
pub fn apply_set(s: &State, actions: &[&Action]) -> Result<State, SasError> {
    for (i, a) in actions.iter().enumerate() {
        if !a.applicable(s) {
            return Err(SasError::NotApplicable {
                action: a.id.clone(),
                state: s.clone(),
            });
        }
        for b in &actions[i + 1..] {
            if action_mutex(a, b) {
                return Err(SasError::ActionMutex {
                    a: a.id.clone(),
                    b: b.id.clone(),
                });
            }
        }
    }
    let mut next = s.clone();
    for a in actions {
        for t in &a.transitions {
            next.0[t.var] = t.to;
        }
    }
    Ok(next)
}

/// Per-feature cost weights `β_j` for the weighted squared distance over
/// partition indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub beta: Vec<f64>,
}

impl CostModel {
    pub fn new(beta: Vec<f64>) -> Result<Self, String> {
        if let Some((j, b)) = beta.iter().enumerate().find(|(_, b)| !(b.is_finite() && **b > 0.0)) {
            return Err(format!("beta[{j}] = {b} must be positive"));
        }
        Ok(Self { beta })
    }

    pub fn unit(m: usize) -> Self {
        Self { beta: vec![1.0; m] }
    }

    /// Weights drawn uniformly from `[lo, hi]`.
    pub fn random<R: rand::Rng>(m: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        Self {
            beta: (0..m).map(|_| rng.gen_range(lo..=hi)).collect(),
        }
    }

    pub fn step_cost(&self, var: usize, from: usize, to: usize) -> f64 {
        let d = from as f64 - to as f64;
        self.beta[var] * d * d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionLibrary {
    actions: Vec<Action>,
}

/// One outgoing edge of the action graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub action: usize,
    pub target: State,
    pub cost: f64,
}

impl ActionLibrary {
    /// Validates actions against the feature space: variables and values in
    /// range, hard features untouched except by prevailing transitions.
    pub fn new(actions: Vec<Action>, features: &[FeatureMeta], table: &PartitionTable) -> Result<Self, SasError> {
        let mut ids = std::collections::HashSet::new();
        for a in &actions {
            if !ids.insert(a.id.as_str()) {
                return Err(SasError::DuplicateId(a.id.clone()));
            }
            for t in &a.transitions {
                let range = |reason: String| SasError::Range {
                    action: a.id.clone(),
                    reason,
                };
                if t.var >= features.len() {
                    return Err(range(format!("variable {} out of range", t.var)));
                }
                let n = table.count(t.var);
                if t.to >= n || t.from.is_some_and(|f| f >= n) {
                    return Err(range(format!("{t} outside domain of size {n}")));
                }
                if !features[t.var].is_soft() && !t.is_prevailing() {
                    return Err(SasError::HardFeature {
                        action: a.id.clone(),
                        feature: features[t.var].name.clone(),
                    });
                }
            }
        }
        Ok(Self { actions })
    }

    /// A library without feature-space validation, for synthetic SAS+
    /// instances.
    pub fn from_actions(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    /// One single-transition action per soft feature and ordered partition
    /// pair `f != g`, costing `β_j (f - g)^2`.
    pub fn default_library(table: &PartitionTable, features: &[FeatureMeta], costs: &CostModel) -> Self {
        let mut actions = Vec::new();
        for (j, meta) in features.iter().enumerate() {
            if !meta.is_soft() {
                continue;
            }
            let n = table.count(j);
            for f in 0..n {
                for g in 0..n {
                    if f == g {
                        continue;
                    }
                    let id = format!("{}:{}->{}", meta.name, f, g);
                    let a = Action::new(id, vec![Transition::regular(j, f, g)], costs.step_cost(j, f, g))
                        .expect("single positive-cost transition is a valid action");
                    actions.push(a);
                }
            }
        }
        Self { actions }
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> &Action {
        &self.actions[i]
    }

    pub fn mean_cost(&self) -> f64 {
        if self.actions.is_empty() {
            return 0.0;
        }
        self.actions.iter().map(|a| a.cost).sum::<f64>() / self.actions.len() as f64
    }

    /// Action-graph edges leaving `s`, in library order.
    pub fn neighbors(&self, s: &State) -> Vec<Edge> {
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| a.applicable(s))
            .map(|(i, a)| Edge {
                action: i,
                target: a.apply_unchecked(s),
                cost: a.cost,
            })
            .collect()
    }

    /// Hex SHA-256 over the canonical JSON of every action.
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(&self.actions).expect("actions serialize");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a JSON action specification:
    /// `[{id, cost, transitions: [{feature, from, to}]}]`.
    ///
    /// `feature` is a name or index. `from` / `to` are partition indices,
    /// category labels, `{"value": x}` raw numbers mapped to their partition,
    /// or (for `from`) `"*"`.
    pub fn parse_spec(text: &str, features: &[FeatureMeta], table: &PartitionTable) -> Result<Self, SasError> {
        let lines = element_lines(text);
        let root: Json = serde_json::from_str(text).map_err(|e| SasError::Spec {
            line: e.line(),
            message: e.to_string(),
        })?;
        let Json::Array(items) = root else {
            return Err(SasError::Spec {
                line: 1,
                message: "expected a JSON array of actions".into(),
            });
        };
        let mut actions = Vec::with_capacity(items.len());
        for (k, item) in items.iter().enumerate() {
            let line = lines.get(k).copied().unwrap_or(1);
            let spec_err = |message: String| SasError::Spec { line, message };
            let id = item
                .get("id")
                .and_then(Json::as_str)
                .ok_or_else(|| spec_err("missing string `id`".into()))?
                .to_string();
            let cost = item
                .get("cost")
                .and_then(Json::as_f64)
                .ok_or_else(|| spec_err(format!("action `{id}`: missing numeric `cost`")))?;
            let trans = item
                .get("transitions")
                .and_then(Json::as_array)
                .ok_or_else(|| spec_err(format!("action `{id}`: missing `transitions` array")))?;
            let mut ts = Vec::with_capacity(trans.len());
            for t in trans {
                let var = match t.get("feature") {
                    Some(Json::String(name)) => features
                        .iter()
                        .position(|f| f.name == *name)
                        .ok_or_else(|| spec_err(format!("action `{id}`: unknown feature `{name}`")))?,
                    Some(Json::Number(n)) => n
                        .as_u64()
                        .map(|v| v as usize)
                        .filter(|&v| v < features.len())
                        .ok_or_else(|| spec_err(format!("action `{id}`: feature index {n} out of range")))?,
                    _ => return Err(spec_err(format!("action `{id}`: transition needs a `feature`"))),
                };
                let from = match t.get("from") {
                    Some(Json::String(s)) if s == "*" => None,
                    Some(v) => Some(
                        resolve_value(v, var, features, table)
                            .map_err(|m| spec_err(format!("action `{id}`: `from`: {m}")))?,
                    ),
                    None => return Err(spec_err(format!("action `{id}`: transition needs `from`"))),
                };
                let to = t
                    .get("to")
                    .ok_or_else(|| spec_err(format!("action `{id}`: transition needs `to`")))
                    .and_then(|v| {
                        resolve_value(v, var, features, table)
                            .map_err(|m| spec_err(format!("action `{id}`: `to`: {m}")))
                    })?;
                ts.push(Transition { var, from, to });
            }
            let action = Action::new(id, ts, cost).map_err(|e| spec_err(e.to_string()))?;
            actions.push((line, action));
        }
        let lines_of: Vec<usize> = actions.iter().map(|(l, _)| *l).collect();
        let actions: Vec<Action> = actions.into_iter().map(|(_, a)| a).collect();
        Self::new(actions.clone(), features, table).map_err(|e| {
            let line = match &e {
                SasError::HardFeature { action, .. } | SasError::Range { action, .. } => {
                    actions.iter().position(|a| a.id == *action).map(|i| lines_of[i])
                }
                SasError::DuplicateId(id) => actions.iter().rposition(|a| a.id == *id).map(|i| lines_of[i]),
                _ => None,
            };
            SasError::Spec {
                line: line.unwrap_or(1),
                message: e.to_string(),
            }
        })
    }
}

fn resolve_value(v: &Json, var: usize, features: &[FeatureMeta], table: &PartitionTable) -> Result<usize, String> {
    let n = table.count(var);
    let idx = match v {
        Json::Number(num) => num
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| format!("partition index must be a non-negative integer, got {num}"))?,
        Json::String(label) => features[var]
            .category_index(label)
            .ok_or_else(|| format!("`{label}` is not a category of `{}`", features[var].name))?,
        Json::Object(obj) => {
            let raw = obj
                .get("value")
                .and_then(Json::as_f64)
                .ok_or_else(|| "object form must be {\"value\": number}".to_string())?;
            if !matches!(features[var].kind, FeatureKind::Numerical) {
                return Err("raw values are only accepted for numerical features".into());
            }
            table.numeric_index(var, raw)
        }
        other => return Err(format!("unsupported value {other}")),
    };
    if idx >= n {
        return Err(format!("partition {idx} outside domain of size {n}"));
    }
    Ok(idx)
}

/// 1-based line number at which each top-level array element starts.
fn element_lines(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut line = 1usize;
    let mut in_str = false;
    let mut escaped = false;
    let mut expecting = false;
    for ch in text.chars() {
        if ch == '\n' {
            line += 1;
        }
        if in_str {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_str = false;
            }
            continue;
        }
        if expecting && !ch.is_whitespace() && ch != ']' {
            out.push(line);
            expecting = false;
        }
        match ch {
            '"' => in_str = true,
            '[' | '{' => {
                depth += 1;
                if depth == 1 && ch == '[' {
                    expecting = true;
                }
            }
            ']' | '}' => depth = depth.saturating_sub(1),
            ',' if depth == 1 => expecting = true,
            _ => {}
        }
    }
    out
}
