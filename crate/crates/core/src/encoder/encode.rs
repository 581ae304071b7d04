use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use crate::discretize::State;
use crate::maxsat::{lit_value, Lit, WcnfInstance};
use crate::sas::{action_mutex, transition_mutex, Transition};

use super::{EncodeError, Plan, SasProblem};

/// Fixed factor turning action costs into integer clause weights.
pub const WEIGHT_SCALE: f64 = 1000.0;

/// Integer soft-clause weight of an action cost; never below 1.
pub fn action_weight(cost: f64) -> u64 {
    ((cost * WEIGHT_SCALE).round() as u64).max(1)
}

/// Meaning of one WCNF variable. Steps are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    Transition { transition: Transition, step: usize },
    Action { action: usize, step: usize },
    Goal { goal: usize },
}

/// Bijection between encoding variables and `1..=len`.
#[derive(Debug, Clone)]
pub struct VarMap {
    makespan: usize,
    kinds: Vec<VarKind>,
    index: HashMap<VarKind, Lit>,
}

impl VarMap {
    fn push(&mut self, kind: VarKind) -> Lit {
        self.kinds.push(kind);
        let v = self.kinds.len() as Lit;
        self.index.insert(kind, v);
        v
    }

    pub fn makespan(&self) -> usize {
        self.makespan
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, var: Lit) -> VarKind {
        self.kinds[var.unsigned_abs() as usize - 1]
    }

    pub fn get(&self, kind: &VarKind) -> Option<Lit> {
        self.index.get(kind).copied()
    }

    pub fn transition(&self, transition: Transition, step: usize) -> Option<Lit> {
        self.get(&VarKind::Transition { transition, step })
    }

    pub fn action(&self, action: usize, step: usize) -> Option<Lit> {
        self.get(&VarKind::Action { action, step })
    }

    pub fn goal(&self, goal: usize) -> Option<Lit> {
        self.get(&VarKind::Goal { goal })
    }

    /// One line per variable: `<var> <meaning>`.
    pub fn write_sidecar<W: Write>(&self, sas: &SasProblem, mut w: W) -> std::io::Result<()> {
        writeln!(w, "c makespan {}", self.makespan)?;
        writeln!(w, "c initial {}", sas.initial)?;
        for (i, k) in self.kinds.iter().enumerate() {
            let v = i + 1;
            match k {
                VarKind::Transition { transition, step } => writeln!(w, "{v} transition {transition} t={step}")?,
                VarKind::Action { action, step } => {
                    writeln!(w, "{v} action {} t={step}", sas.actions[*action].id())?
                }
                VarKind::Goal { goal } => writeln!(w, "{v} goal {}", sas.goals[*goal])?,
            }
        }
        Ok(())
    }
}

impl fmt::Display for VarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarKind::Transition { transition, step } => write!(f, "transition {transition} t={step}"),
            VarKind::Action { action, step } => write!(f, "action #{action} t={step}"),
            VarKind::Goal { goal } => write!(f, "goal #{goal}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Encoding {
    pub wcnf: WcnfInstance,
    pub vars: VarMap,
}

/// Per-variable forward and backward value reachability by step; a
/// transition outside both is fixed false instead of being constrained.
struct Reach {
    fwd: Vec<Vec<bool>>,
    bwd: Vec<Vec<bool>>,
}

impl Reach {
    fn value(&self, t: usize, v: usize) -> bool {
        self.fwd[t][v] && self.bwd[t][v]
    }
}

fn reachability(sas: &SasProblem, x: usize, l: usize, moves: &[Transition]) -> Reach {
    let n = sas.domains[x];
    let mut fwd = vec![vec![false; n]; l + 1];
    fwd[0][sas.initial[x]] = true;
    for t in 1..=l {
        let mut next = fwd[t - 1].clone();
        for m in moves {
            if m.from.is_none_or(|f| fwd[t - 1][f]) {
                next[m.to] = true;
            }
        }
        fwd[t] = next;
    }
    let mut bwd = vec![vec![false; n]; l + 1];
    for g in &sas.goals {
        bwd[l][g[x]] = true;
    }
    for t in (1..=l).rev() {
        let mut prev = bwd[t].clone();
        for m in moves {
            if bwd[t][m.to] {
                match m.from {
                    Some(f) => prev[f] = true,
                    None => prev.iter_mut().for_each(|p| *p = true),
                }
            }
        }
        bwd[t - 1] = prev;
    }
    Reach { fwd, bwd }
}

/// Builds the WCNF for makespan `l`.
pub fn encode(sas: &SasProblem, l: usize) -> Result<Encoding, EncodeError> {
    if l == 0 {
        return Err(EncodeError::ZeroMakespan);
    }
    let m = sas.domains.len();
    let mut moves: Vec<Vec<Transition>> = vec![Vec::new(); m];
    let mut supporters: HashMap<Transition, Vec<usize>> = HashMap::new();
    for (ai, a) in sas.actions.iter().enumerate() {
        for t in a.transitions() {
            moves[t.var].push(*t);
            supporters.entry(*t).or_default().push(ai);
        }
    }
    for mv in &mut moves {
        mv.sort();
        mv.dedup();
    }
    let mechanical: Vec<Vec<usize>> = moves
        .iter()
        .map(|mv| mv.iter().filter(|t| t.is_mechanical()).map(|t| t.to).collect())
        .collect();
    let reach: Vec<Reach> = (0..m).map(|x| reachability(sas, x, l, &moves[x])).collect();
    let changes = |x: usize, f: usize, g: usize| {
        f == g
            || supporters.contains_key(&Transition::regular(x, f, g))
            || supporters.contains_key(&Transition::mechanical(x, g))
    };
    let live = |tr: &Transition, t: usize| -> bool {
        let r = &reach[tr.var];
        match tr.from {
            Some(f) => r.value(t - 1, f) && r.value(t, tr.to) && changes(tr.var, f, tr.to),
            None => r.value(t, tr.to),
        }
    };

    let mut vars = VarMap {
        makespan: l,
        kinds: Vec::new(),
        index: HashMap::new(),
    };
    // Per step, per variable: every transition in a fixed order.
    let mut all: Vec<Vec<Vec<Transition>>> = vec![Vec::new(); l + 1];
    for t in 1..=l {
        for x in 0..m {
            let n = sas.domains[x];
            let mut ts = Vec::with_capacity(n * n + mechanical[x].len());
            for f in 0..n {
                for g in 0..n {
                    ts.push(Transition::regular(x, f, g));
                }
            }
            ts.extend(mechanical[x].iter().map(|&g| Transition::mechanical(x, g)));
            for tr in &ts {
                vars.push(VarKind::Transition { transition: *tr, step: t });
            }
            all[t].push(ts);
        }
        for a in 0..sas.actions.len() {
            vars.push(VarKind::Action { action: a, step: t });
        }
    }
    for g in 0..sas.goals.len() {
        vars.push(VarKind::Goal { goal: g });
    }

    let mut w = WcnfInstance::new(vars.len());
    let tv = |tr: Transition, t: usize| vars.transition(tr, t).expect("transition variable");
    let av = |a: usize, t: usize| vars.action(a, t).expect("action variable");
    let mut hard = |c: Vec<Lit>| w.add_hard(c);

    // Transitions that cannot lie on any run are fixed false.
    for t in 1..=l {
        for ts in &all[t] {
            for tr in ts {
                if !live(tr, t) {
                    hard(vec![-tv(*tr, t)])?;
                }
            }
        }
    }

    // Initial state.
    for x in 0..m {
        let f = sas.initial[x];
        let c = (0..sas.domains[x])
            .map(|g| Transition::regular(x, f, g))
            .filter(|tr| live(tr, 1))
            .map(|tr| tv(tr, 1))
            .collect();
        hard(c)?;
    }

    // Goal state and goal conditions.
    hard((0..sas.goals.len()).map(|g| vars.goal(g).expect("goal variable")).collect())?;
    for (gi, goal) in sas.goals.iter().enumerate() {
        let u = vars.goal(gi).expect("goal variable");
        for x in 0..m {
            let mut c = vec![-u];
            c.extend(
                (0..sas.domains[x])
                    .map(|f| Transition::regular(x, f, goal[x]))
                    .filter(|tr| live(tr, l))
                    .map(|tr| tv(tr, l)),
            );
            hard(c)?;
        }
    }

    for t in 1..=l {
        for x in 0..m {
            let n = sas.domains[x];
            let ts: Vec<Transition> = all[t][x].iter().copied().filter(|tr| live(tr, t)).collect();
            for tr in &ts {
                let u = tv(*tr, t);
                let Some(f) = tr.from else {
                    // A mechanical transition fixes the value reached by the
                    // variable's regular transition at the same step.
                    let mut c = vec![-u];
                    c.extend(
                        (0..n)
                            .map(|f| Transition::regular(x, f, tr.to))
                            .filter(|r| live(r, t))
                            .map(|r| tv(r, t)),
                    );
                    hard(c)?;
                    continue;
                };
                let g = tr.to;
                // Progression.
                if t < l {
                    let mut c = vec![-u];
                    c.extend(
                        (0..n)
                            .map(|h| Transition::regular(x, g, h))
                            .filter(|r| live(r, t + 1))
                            .map(|r| tv(r, t + 1)),
                    );
                    hard(c)?;
                }
                // Regression.
                if t >= 2 {
                    let mut c = vec![-u];
                    c.extend(
                        (0..n)
                            .map(|h| Transition::regular(x, h, f))
                            .filter(|r| live(r, t - 1))
                            .map(|r| tv(r, t - 1)),
                    );
                    hard(c)?;
                }
            }
            // Mutually exclusive transitions.
            for (i, a) in ts.iter().enumerate() {
                for b in &ts[i + 1..] {
                    if transition_mutex(a, b) {
                        hard(vec![-tv(*a, t), -tv(*b, t)])?;
                    }
                }
            }
            // Action existence.
            for tr in ts.iter().filter(|tr| !tr.is_prevailing()) {
                let mut c = vec![-tv(*tr, t)];
                let mut acts: Vec<usize> = supporters.get(tr).cloned().unwrap_or_default();
                if tr.from.is_some() {
                    if let Some(more) = supporters.get(&Transition::mechanical(x, tr.to)) {
                        acts.extend(more);
                    }
                }
                acts.sort_unstable();
                acts.dedup();
                c.extend(acts.into_iter().map(|a| av(a, t)));
                hard(c)?;
            }
        }
    }

    // Mutually exclusive actions; only actions sharing a variable can clash.
    let mut by_var: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (ai, a) in sas.actions.iter().enumerate() {
        let mut xs: Vec<usize> = a.transitions().iter().map(|t| t.var).collect();
        xs.dedup();
        for x in xs {
            by_var[x].push(ai);
        }
    }
    let mut pairs = BTreeSet::new();
    for group in &by_var {
        for (i, &a) in group.iter().enumerate() {
            for &b in &group[i + 1..] {
                if action_mutex(&sas.actions[a], &sas.actions[b]) {
                    pairs.insert((a, b));
                }
            }
        }
    }
    let action_live =
        |a: usize, t: usize| sas.actions[a].transitions().iter().all(|tr| live(tr, t));
    for t in 1..=l {
        for &(a, b) in &pairs {
            if action_live(a, t) && action_live(b, t) {
                hard(vec![-av(a, t), -av(b, t)])?;
            }
        }
        // Composition.
        for (ai, a) in sas.actions.iter().enumerate() {
            for tr in a.transitions() {
                hard(vec![-av(ai, t), tv(*tr, t)])?;
            }
        }
    }

    for t in 1..=l {
        for (ai, a) in sas.actions.iter().enumerate() {
            w.add_soft(action_weight(a.cost()), vec![-av(ai, t)])?;
        }
    }
    Ok(Encoding { wcnf: w, vars })
}

/// Reads the chosen actions off a model. Steps without actions are dropped.
pub fn decode(model: &[bool], vars: &VarMap, sas: &SasProblem) -> Plan {
    let mut steps = Vec::new();
    for t in 1..=vars.makespan {
        let step: Vec<usize> = (0..sas.actions.len())
            .filter(|&a| vars.action(a, t).is_some_and(|v| lit_value(v, model)))
            .collect();
        if !step.is_empty() {
            steps.push(step);
        }
    }
    Plan::from_steps(steps, sas)
}

/// The state after running `steps` from `start` without any checks.
pub(crate) fn run(start: &State, steps: &[Vec<usize>], sas: &SasProblem) -> State {
    let mut s = start.clone();
    for step in steps {
        let mut next = s.clone();
        for &a in step {
            for tr in sas.actions[a].transitions() {
                next.0[tr.var] = tr.to;
            }
        }
        s = next;
    }
    s
}
