use crate::cnf::{Assignment, CnfFormula, Literal};
use crate::error::{Error, Result};

use super::counters::Counters;
use super::dpll::{dpll_solve_with, DpllOptions, SatResult};

#[derive(Clone, Copy, Debug)]
pub struct MaxSatOptions {
    /// Maximum number of search nodes (shared by the SAT check and the
    /// branch-and-bound); `None` for unbounded.
    pub node_budget: Option<u64>,
}

impl Default for MaxSatOptions {
    fn default() -> Self {
        MaxSatOptions {
            node_budget: Some(20_000_000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaxSatSolution {
    pub min_gap: usize,
    pub witness: Assignment,
}

/// Threshold a soft reference at 0.5 (ties go to `true`).
pub fn round_reference(reference: &[f64]) -> Vec<bool> {
    reference.iter().map(|&p| p >= 0.5).collect()
}

struct Budget {
    nodes: u64,
    limit: Option<u64>,
}

impl Budget {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        match self.limit {
            Some(b) if self.nodes > b => Err(Error::BudgetExceeded { budget: b }),
            _ => Ok(()),
        }
    }
}

/// Minimum number of unsatisfied clauses over all assignments, with a witness.
pub fn maxsat_optimum(f: &CnfFormula) -> Result<MaxSatSolution> {
    maxsat_optimum_with(f, MaxSatOptions::default())
}

pub fn maxsat_optimum_with(f: &CnfFormula, opts: MaxSatOptions) -> Result<MaxSatSolution> {
    let dpll_opts = DpllOptions {
        node_budget: opts.node_budget,
    };
    if let SatResult::Sat(w) = dpll_solve_with(f, dpll_opts)? {
        return Ok(MaxSatSolution { min_gap: 0, witness: w });
    }

    let n = f.num_vars();
    let mut st = Counters::new(f);

    // static order: most occurrences first; prefer the more frequent polarity
    let mut pos = vec![0usize; n];
    let mut neg = vec![0usize; n];
    for c in &st.clauses {
        for l in c {
            if l.is_positive() {
                pos[l.var()] += 1;
            } else {
                neg[l.var()] += 1;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(pos[v] + neg[v]));
    let prefer: Vec<bool> = (0..n).map(|v| pos[v] >= neg[v]).collect();

    let incumbent = |vals: &[bool]| f.gap(vals);
    let all_pref = prefer.clone();
    let mut search = BnB {
        order: &order,
        prefer: &prefer,
        best_gap: incumbent(&all_pref),
        best: all_pref,
        // the formula is unsatisfiable, so 1 is a valid global lower bound
        lower_bound: 1,
        done: false,
        budget: Budget {
            nodes: 0,
            limit: opts.node_budget,
        },
    };
    if search.best_gap > search.lower_bound {
        search.dfs(&mut st, 0)?;
    }
    Ok(MaxSatSolution {
        min_gap: search.best_gap,
        witness: Assignment(search.best),
    })
}

struct BnB<'a> {
    order: &'a [usize],
    prefer: &'a [bool],
    best_gap: usize,
    best: Vec<bool>,
    lower_bound: usize,
    done: bool,
    budget: Budget,
}

impl BnB<'_> {
    fn dfs(&mut self, st: &mut Counters, mut pos: usize) -> Result<()> {
        self.budget.tick()?;
        if st.falsified >= self.best_gap {
            return Ok(());
        }
        let mark = st.trail.len();
        // One more falsified clause would tie the incumbent, so every open
        // clause must now be satisfied: unit propagation is sound here.
        if st.falsified + 1 == self.best_gap && !st.propagate_all(st.falsified) {
            st.undo_to(mark);
            return Ok(());
        }
        while pos < self.order.len() && st.value[self.order[pos]].is_some() {
            pos += 1;
        }
        if pos == self.order.len() {
            self.best_gap = st.falsified;
            self.best = st.value.iter().map(|v| v.expect("complete")).collect();
            self.done = self.best_gap <= self.lower_bound;
            st.undo_to(mark);
            return Ok(());
        }
        let var = self.order[pos];
        for value in [self.prefer[var], !self.prefer[var]] {
            let m = st.trail.len();
            st.assign(Literal::new(var, value));
            self.dfs(st, pos + 1)?;
            st.undo_to(m);
            if self.done {
                break;
            }
        }
        st.undo_to(mark);
        Ok(())
    }
}

/// Among assignments with the minimum gap, the one closest in Hamming
/// distance to `round_reference(reference)`.
///
/// Ties are broken by the lexicographically smallest disagreement vector
/// (variables compared in index order), i.e. disagreeing on later variables
/// is preferred.
pub fn closest_assignment(f: &CnfFormula, reference: &[f64]) -> Result<Assignment> {
    closest_assignment_with(f, reference, MaxSatOptions::default())
}

pub fn closest_assignment_with(f: &CnfFormula, reference: &[f64], opts: MaxSatOptions) -> Result<Assignment> {
    if reference.len() != f.num_vars() {
        return Err(Error::LengthMismatch {
            expected: f.num_vars(),
            got: reference.len(),
        });
    }
    let target = round_reference(reference);
    let min_gap = if f.gap(&target) == 0 {
        return Ok(Assignment(target));
    } else {
        maxsat_optimum_with(f, opts)?.min_gap
    };

    let mut st = Counters::new(f);
    let mut search = Closest {
        target: &target,
        gap_limit: min_gap,
        best: None,
        best_ham: usize::MAX,
        budget: Budget {
            nodes: 0,
            limit: opts.node_budget,
        },
    };
    search.dfs(&mut st, 0, 0)?;
    Ok(Assignment(search.best.expect("an optimum exists")))
}

struct Closest<'a> {
    target: &'a [bool],
    gap_limit: usize,
    best: Option<Vec<bool>>,
    best_ham: usize,
    budget: Budget,
}

impl Closest<'_> {
    fn disagreements(&self, st: &Counters, from: usize) -> usize {
        st.trail[from..]
            .iter()
            .filter(|&&v| st.value[v] != Some(self.target[v]))
            .count()
    }

    /// Depth-first in index order, agreeing value first, so complete
    /// assignments are visited in lexicographic order of their disagreement
    /// vectors. Propagation only removes subtrees without feasible leaves.
    fn dfs(&mut self, st: &mut Counters, mut var: usize, ham: usize) -> Result<()> {
        self.budget.tick()?;
        if st.falsified > self.gap_limit || ham >= self.best_ham {
            return Ok(());
        }
        let mark = st.trail.len();
        let mut ham = ham;
        if st.falsified == self.gap_limit {
            if !st.propagate_all(self.gap_limit) {
                st.undo_to(mark);
                return Ok(());
            }
            ham += self.disagreements(st, mark);
            if ham >= self.best_ham {
                st.undo_to(mark);
                return Ok(());
            }
        }
        let n = st.num_vars();
        while var < n && st.value[var].is_some() {
            var += 1;
        }
        if var == n {
            if st.falsified == self.gap_limit {
                self.best_ham = ham;
                self.best = Some(st.value.iter().map(|v| v.expect("complete")).collect());
            }
            st.undo_to(mark);
            return Ok(());
        }
        for value in [self.target[var], !self.target[var]] {
            let m = st.trail.len();
            st.assign(Literal::new(var, value));
            let extra = usize::from(value != self.target[var]);
            self.dfs(st, var + 1, ham + extra)?;
            st.undo_to(m);
            if self.best_ham == 0 {
                break;
            }
        }
        st.undo_to(mark);
        Ok(())
    }
}
