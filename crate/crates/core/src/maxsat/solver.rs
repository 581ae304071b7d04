// Exact branch and bound with unit propagation and clause learning.
//
// Every soft clause is reduced to a penalty on a single variable (non-unit
// soft clauses get a relaxation variable). The search descends in a fixed
// order, heaviest penalties first, trying each soft variable's cheap value
// before the other. A node is pruned when its cost plus a lower bound from
// disjoint propagation cores reaches the incumbent; the literals that
// justify the prune are learned as a clause, exactly like a hard conflict.

use std::time::Instant;

use super::{Lit, SolveOptions, SolveResult, SolveStatus, WcnfInstance};

type ILit = u32;

fn mk(v: usize, negative: bool) -> ILit {
    ((v as u32) << 1) | negative as u32
}

fn var(l: ILit) -> usize {
    (l >> 1) as usize
}

fn not(l: ILit) -> ILit {
    l ^ 1
}

fn import(d: Lit) -> ILit {
    mk(d.unsigned_abs() as usize - 1, d < 0)
}

const UNSET: u8 = 2;

enum Conflict {
    Clause(usize),
    /// Cost bound reached; the literals (all true) justify it.
    Bound(Vec<ILit>),
}

struct Solver {
    n: usize,
    clauses: Vec<Vec<ILit>>,
    watches: Vec<Vec<usize>>,
    value: Vec<u8>,
    level: Vec<usize>,
    reason: Vec<Option<usize>>,
    trail: Vec<ILit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    seen: Vec<bool>,
    /// Cost of giving variable `v` its non-preferred value.
    penalty: Vec<u64>,
    preferred: Vec<bool>,
    cost: u64,
    order: Vec<usize>,
    next_decision: usize,
    position: Vec<usize>,
    soft_order: Vec<usize>,
}

impl Solver {
    fn lit_value(&self, l: ILit) -> u8 {
        let v = self.value[var(l)];
        if v == UNSET {
            UNSET
        } else {
            v ^ (l & 1) as u8
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, l: ILit, reason: Option<usize>) {
        let v = var(l);
        let val = (l & 1 == 0) as u8;
        self.value[v] = val;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
        if self.penalty[v] > 0 && (val == 1) != self.preferred[v] {
            self.cost += self.penalty[v];
        }
    }

    fn backtrack(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let start = self.trail_lim[lvl];
        for i in (start..self.trail.len()).rev() {
            let v = var(self.trail[i]);
            if self.penalty[v] > 0 && (self.value[v] == 1) != self.preferred[v] {
                self.cost -= self.penalty[v];
            }
            self.value[v] = UNSET;
            self.reason[v] = None;
            self.next_decision = self.next_decision.min(self.position[v]);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(lvl);
        self.qhead = self.qhead.min(start);
    }

    /// Adds a clause with at least two literals, watching the first two.
    fn attach(&mut self, c: Vec<ILit>) -> usize {
        let ci = self.clauses.len();
        self.watches[c[0] as usize].push(ci);
        self.watches[c[1] as usize].push(ci);
        self.clauses.push(c);
        ci
    }

    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = not(p);
            let mut ws = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut i = 0;
            let mut conflict = None;
            while i < ws.len() {
                let ci = ws[i];
                let clause = &mut self.clauses[ci];
                if clause[0] == false_lit {
                    clause.swap(0, 1);
                }
                let first = clause[0];
                let first_val = {
                    let v = self.value[var(first)];
                    if v == UNSET {
                        UNSET
                    } else {
                        v ^ (first & 1) as u8
                    }
                };
                if first_val == 1 {
                    i += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..clause.len() {
                    let l = clause[k];
                    let lv = self.value[var(l)];
                    if lv == UNSET || lv ^ (l & 1) as u8 == 1 {
                        clause.swap(1, k);
                        self.watches[clause[1] as usize].push(ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    ws.swap_remove(i);
                    continue;
                }
                if first_val == 0 {
                    conflict = Some(ci);
                    break;
                }
                self.enqueue(first, Some(ci));
                i += 1;
            }
            let rest = std::mem::take(&mut self.watches[false_lit as usize]);
            ws.extend(rest);
            self.watches[false_lit as usize] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    /// True literals on the trail whose soft variable took its costly value.
    fn violated(&self) -> Vec<ILit> {
        self.trail
            .iter()
            .copied()
            .filter(|&l| {
                let v = var(l);
                self.penalty[v] > 0 && (l & 1 == 0) != self.preferred[v]
            })
            .collect()
    }

    /// First-UIP analysis of a clause whose literals are all false and at
    /// least one of which sits at the current decision level.
    fn analyze(&mut self, conflict: Vec<ILit>) -> (Vec<ILit>, usize) {
        let cur = self.decision_level();
        let mut learnt: Vec<ILit> = vec![0];
        let mut pending = 0usize;
        let mut idx = self.trail.len();
        let mut clause = conflict;
        let mut skip: Option<ILit> = None;
        loop {
            for &q in &clause {
                if Some(q) == skip {
                    continue;
                }
                let v = var(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] == cur {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[var(self.trail[idx])] {
                    break;
                }
            }
            let p = self.trail[idx];
            self.seen[var(p)] = false;
            pending -= 1;
            if pending == 0 {
                learnt[0] = not(p);
                break;
            }
            let r = self.reason[var(p)].expect("implied literal has a reason");
            clause = self.clauses[r].clone();
            skip = Some(p);
        }
        for &l in &learnt[1..] {
            self.seen[var(l)] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut best = 1;
            for k in 1..learnt.len() {
                if self.level[var(learnt[k])] > self.level[var(learnt[best])] {
                    best = k;
                }
            }
            learnt.swap(1, best);
            bt = self.level[var(learnt[1])];
        }
        (learnt, bt)
    }

    /// Resolves a conflict. Returns false when the search space is exhausted.
    fn resolve(&mut self, conflict: Conflict) -> bool {
        let clause: Vec<ILit> = match conflict {
            Conflict::Clause(ci) => self.clauses[ci].clone(),
            Conflict::Bound(reasons) => reasons.into_iter().map(not).collect(),
        };
        let top = clause.iter().map(|&l| self.level[var(l)]).max().unwrap_or(0);
        if top == 0 {
            return false;
        }
        self.backtrack(top);
        let (learnt, bt) = self.analyze(clause);
        self.backtrack(bt);
        if learnt.len() == 1 {
            self.enqueue(learnt[0], None);
        } else {
            let asserting = learnt[0];
            let ci = self.attach(learnt);
            self.enqueue(asserting, Some(ci));
        }
        true
    }

    /// Collects the cause of a propagation conflict inside a probe level:
    /// the probed soft variables involved, and the pre-probe trail literals.
    fn probe_core(&mut self, seeds: Vec<usize>, probe_level: usize, core: &mut Vec<usize>, outside: &mut Vec<ILit>, outside_seen: &mut [bool]) {
        let start = self.trail_lim[probe_level - 1];
        let mut marked = Vec::new();
        let mark = |s: &mut Self, v: usize, marked: &mut Vec<usize>, outside: &mut Vec<ILit>, outside_seen: &mut [bool]| {
            if s.level[v] == probe_level {
                if !s.seen[v] {
                    s.seen[v] = true;
                    marked.push(v);
                }
            } else if s.level[v] > 0 && !outside_seen[v] {
                outside_seen[v] = true;
                outside.push(mk(v, s.value[v] == 0));
            }
        };
        for v in seeds {
            mark(self, v, &mut marked, outside, outside_seen);
        }
        for i in (start..self.trail.len()).rev() {
            let v = var(self.trail[i]);
            if !self.seen[v] {
                continue;
            }
            match self.reason[v] {
                Some(r) => {
                    let lits = self.clauses[r].clone();
                    for l in lits {
                        if var(l) != v {
                            mark(self, var(l), &mut marked, outside, outside_seen);
                        }
                    }
                }
                None => core.push(v),
            }
        }
        for v in marked {
            self.seen[v] = false;
        }
    }

    /// Lower bound on the extra cost of completing the current assignment.
    /// Returns the prune explanation once `cost + bound` reaches `ub`.
    fn bound_conflict(&mut self, ub: u64) -> Option<Vec<ILit>> {
        if self.cost >= ub {
            return Some(self.violated());
        }
        let need = ub - self.cost;
        let mut residual: Vec<(usize, u64)> = self
            .soft_order
            .iter()
            .filter(|&&v| self.value[v] == UNSET)
            .map(|&v| (v, self.penalty[v]))
            .collect();
        if residual.iter().map(|r| r.1).sum::<u64>() < need {
            return None;
        }
        let mut slot = vec![usize::MAX; self.n];
        for (k, &(v, _)) in residual.iter().enumerate() {
            slot[v] = k;
        }
        let mut lb = 0u64;
        let mut outside = Vec::new();
        let mut outside_seen = vec![false; self.n];
        loop {
            self.trail_lim.push(self.trail.len());
            let probe_level = self.decision_level();
            let mut core = Vec::new();
            let mut found = false;
            for k in 0..residual.len() {
                let (v, r) = residual[k];
                if r == 0 {
                    continue;
                }
                let want = self.preferred[v];
                match self.value[v] {
                    UNSET => {
                        self.enqueue(mk(v, !want), None);
                        if let Some(ci) = self.propagate() {
                            let seeds = self.clauses[ci].iter().map(|&l| var(l)).collect();
                            self.probe_core(seeds, probe_level, &mut core, &mut outside, &mut outside_seen);
                            found = true;
                            break;
                        }
                    }
                    val if (val == 1) == want => {}
                    _ => {
                        core.push(v);
                        self.probe_core(vec![v], probe_level, &mut core, &mut outside, &mut outside_seen);
                        found = true;
                        break;
                    }
                }
            }
            self.backtrack(probe_level - 1);
            if !found {
                return None;
            }
            core.sort_unstable();
            core.dedup();
            let w = core.iter().map(|&v| residual[slot[v]].1).min().unwrap_or(0);
            if w == 0 {
                return None;
            }
            lb += w;
            for &v in &core {
                residual[slot[v]].1 -= w;
            }
            if lb >= need {
                let mut expl = self.violated();
                expl.extend(outside);
                return Some(expl);
            }
        }
    }

    fn pick_branch(&mut self) -> Option<ILit> {
        while self.next_decision < self.order.len() {
            let v = self.order[self.next_decision];
            if self.value[v] == UNSET {
                let positive = self.penalty[v] > 0 && self.preferred[v];
                return Some(mk(v, !positive));
            }
            self.next_decision += 1;
        }
        None
    }
}

/// Solves to optimality unless the timeout expires first.
pub fn solve(instance: &WcnfInstance, options: SolveOptions) -> SolveResult {
    let deadline = options.timeout.map(|t| Instant::now() + t);
    let orig = instance.num_vars();
    let relax: Vec<&(u64, Vec<Lit>)> = instance.soft().iter().filter(|(_, c)| c.len() > 1).collect();
    let n = orig + relax.len();
    let mut pos_pen = vec![0u64; n];
    let mut neg_pen = vec![0u64; n];
    let mut hard: Vec<Vec<ILit>> = instance
        .hard()
        .iter()
        .map(|c| c.iter().map(|&l| import(l)).collect())
        .collect();
    let mut aux = orig;
    for (w, c) in instance.soft() {
        match c.len() {
            0 => {}
            1 => {
                let l = import(c[0]);
                // Penalty incurred when the literal is false.
                if l & 1 == 0 {
                    pos_pen[var(l)] += w;
                } else {
                    neg_pen[var(l)] += w;
                }
            }
            _ => {
                let mut h: Vec<ILit> = c.iter().map(|&l| import(l)).collect();
                h.push(mk(aux, false));
                hard.push(h);
                neg_pen[aux] += w;
                aux += 1;
            }
        }
    }
    let mut penalty = vec![0u64; n];
    let mut preferred = vec![false; n];
    for v in 0..n {
        penalty[v] = pos_pen[v].abs_diff(neg_pen[v]);
        preferred[v] = pos_pen[v] > neg_pen[v];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| penalty[b].cmp(&penalty[a]).then(a.cmp(&b)));
    let mut position = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }
    let soft_order: Vec<usize> = order.iter().copied().filter(|&v| penalty[v] > 0).collect();

    let mut s = Solver {
        n,
        clauses: Vec::new(),
        watches: vec![Vec::new(); 2 * n],
        value: vec![UNSET; n],
        level: vec![0; n],
        reason: vec![None; n],
        trail: Vec::new(),
        trail_lim: Vec::new(),
        qhead: 0,
        seen: vec![false; n],
        penalty,
        preferred,
        cost: 0,
        order,
        next_decision: 0,
        position,
        soft_order,
    };

    let unsat = SolveResult {
        status: SolveStatus::HardUnsat,
        model: None,
        cost: None,
    };
    for c in hard {
        match c.len() {
            0 => return unsat,
            1 => match s.lit_value(c[0]) {
                0 => return unsat,
                1 => {}
                _ => s.enqueue(c[0], None),
            },
            _ => {
                s.attach(c);
            }
        }
    }

    // The incumbent model, its reported cost, and its cost in penalty terms.
    let mut best: Option<(Vec<bool>, u64, u64)> = None;
    let mut steps = 0u64;
    let finished = loop {
        steps += 1;
        if steps % 256 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
            break false;
        }
        let conflict = if let Some(ci) = s.propagate() {
            Some(Conflict::Clause(ci))
        } else if let Some((_, _, ub)) = &best {
            s.bound_conflict(*ub).map(Conflict::Bound)
        } else {
            None
        };
        if let Some(c) = conflict {
            if !s.resolve(c) {
                break true;
            }
            continue;
        }
        match s.pick_branch() {
            Some(l) => {
                s.trail_lim.push(s.trail.len());
                s.enqueue(l, None);
            }
            None => {
                let model: Vec<bool> = s.value[..orig].iter().map(|&v| v == 1).collect();
                let cost = instance.cost(&model);
                debug_assert!(instance.satisfies_hard(&model));
                let expl = s.violated();
                best = Some((model, cost, s.cost));
                if expl.is_empty() || !s.resolve(Conflict::Bound(expl)) {
                    break true;
                }
            }
        }
    };
    match best {
        Some((model, cost, _)) => SolveResult {
            status: if finished {
                SolveStatus::Optimal
            } else {
                SolveStatus::Timeout
            },
            model: Some(model),
            cost: Some(cost),
        },
        None if finished => unsat,
        None => SolveResult {
            status: SolveStatus::Timeout,
            model: None,
            cost: None,
        },
    }
}
