mod external;
mod solver;
mod wcnf;

use std::time::Duration;

use thiserror::Error;

pub use external::{format_output, parse_output, solve_external};
pub use solver::solve;
pub use wcnf::{read_wcnf, write_wcnf};

#[derive(Debug, Error)]
pub enum MaxSatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("header declares {expected} clauses but {found} were found")]
    ClauseCount { expected: usize, found: usize },
    #[error("literal {lit} is outside 1..={num_vars}")]
    Literal { lit: i32, num_vars: usize },
    #[error("soft clause weight must be positive")]
    ZeroWeight,
    #[error("total soft weight overflows")]
    Overflow,
    #[error("external solver: {0}")]
    External(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// DIMACS-style literal: `v` or `-v` for a 1-based variable `v`.
pub type Lit = i32;

/// Hard and weighted soft clauses over variables `1..=num_vars`. Clauses are
/// normalized on insertion: duplicate literals are merged and tautologies
/// are dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WcnfInstance {
    num_vars: usize,
    hard: Vec<Vec<Lit>>,
    soft: Vec<(u64, Vec<Lit>)>,
}

fn normalize(mut lits: Vec<Lit>) -> Option<Vec<Lit>> {
    lits.sort_by_key(|l| (l.unsigned_abs(), *l));
    lits.dedup();
    if lits.windows(2).any(|w| w[0] == -w[1]) {
        return None;
    }
    Some(lits)
}

impl WcnfInstance {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            ..Self::default()
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Allocates a fresh variable and returns it.
    pub fn new_var(&mut self) -> Lit {
        self.num_vars += 1;
        self.num_vars as Lit
    }

    fn check(&self, lits: &[Lit]) -> Result<(), MaxSatError> {
        match lits
            .iter()
            .find(|l| **l == 0 || l.unsigned_abs() as usize > self.num_vars)
        {
            Some(&lit) => Err(MaxSatError::Literal {
                lit,
                num_vars: self.num_vars,
            }),
            None => Ok(()),
        }
    }

    pub fn add_hard(&mut self, lits: Vec<Lit>) -> Result<(), MaxSatError> {
        self.check(&lits)?;
        if let Some(c) = normalize(lits) {
            self.hard.push(c);
        }
        Ok(())
    }

    pub fn add_soft(&mut self, weight: u64, lits: Vec<Lit>) -> Result<(), MaxSatError> {
        if weight == 0 {
            return Err(MaxSatError::ZeroWeight);
        }
        self.check(&lits)?;
        if let Some(c) = normalize(lits) {
            self.soft.push((weight, c));
        }
        Ok(())
    }

    pub fn hard(&self) -> &[Vec<Lit>] {
        &self.hard
    }

    pub fn soft(&self) -> &[(u64, Vec<Lit>)] {
        &self.soft
    }

    pub fn num_clauses(&self) -> usize {
        self.hard.len() + self.soft.len()
    }

    pub fn soft_total(&self) -> Result<u64, MaxSatError> {
        self.soft
            .iter()
            .try_fold(0u64, |acc, (w, _)| acc.checked_add(*w))
            .ok_or(MaxSatError::Overflow)
    }

    /// Weight marking hard clauses: one more than the total soft weight.
    pub fn top(&self) -> Result<u64, MaxSatError> {
        self.soft_total()?.checked_add(1).ok_or(MaxSatError::Overflow)
    }

    /// `model[v - 1]` is the value of variable `v`.
    pub fn satisfies_hard(&self, model: &[bool]) -> bool {
        self.hard.iter().all(|c| clause_satisfied(c, model))
    }

    /// Total weight of soft clauses falsified by `model`.
    pub fn cost(&self, model: &[bool]) -> u64 {
        self.soft
            .iter()
            .filter(|(_, c)| !clause_satisfied(c, model))
            .map(|(w, _)| *w)
            .sum()
    }
}

pub fn lit_value(lit: Lit, model: &[bool]) -> bool {
    let v = model[lit.unsigned_abs() as usize - 1];
    if lit > 0 {
        v
    } else {
        !v
    }
}

pub fn clause_satisfied(clause: &[Lit], model: &[bool]) -> bool {
    clause.iter().any(|&l| lit_value(l, model))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The model is proved optimal.
    Optimal,
    /// The hard clauses alone are unsatisfiable.
    HardUnsat,
    /// Time ran out; the model, if any, is the best one found.
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub model: Option<Vec<bool>>,
    pub cost: Option<u64>,
}

impl SolveResult {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub timeout: Option<Duration>,
}
