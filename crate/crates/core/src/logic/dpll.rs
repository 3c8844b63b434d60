use crate::cnf::{Assignment, CnfFormula, Literal};
use crate::error::{Error, Result};

use super::counters::Counters;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Assignment),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn witness(&self) -> Option<&Assignment> {
        match self {
            SatResult::Sat(a) => Some(a),
            SatResult::Unsat => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DpllOptions {
    /// Maximum number of branching decisions; `None` for unbounded.
    pub node_budget: Option<u64>,
}

impl Default for DpllOptions {
    fn default() -> Self {
        DpllOptions {
            node_budget: Some(50_000_000),
        }
    }
}

pub fn dpll_solve(f: &CnfFormula) -> Result<SatResult> {
    dpll_solve_with(f, DpllOptions::default())
}

struct Frame {
    var: usize,
    trail_len: usize,
    flipped: bool,
}

/// Chronological-backtracking DPLL with unit propagation. Branches on the
/// unassigned variable with the most occurrences in unsatisfied clauses
/// (lowest index on ties), trying `true` first.
pub fn dpll_solve_with(f: &CnfFormula, opts: DpllOptions) -> Result<SatResult> {
    let mut st = Counters::new(f);
    if !st.propagate_all(0) {
        return Ok(SatResult::Unsat);
    }
    let mut stack: Vec<Frame> = Vec::new();
    let mut counts = vec![0u32; st.num_vars()];
    let mut decisions: u64 = 0;

    loop {
        let Some(var) = pick_branch_var(&st, &mut counts) else {
            let values = st.value.iter().map(|v| v.unwrap_or(true)).collect();
            return Ok(SatResult::Sat(Assignment(values)));
        };
        decisions += 1;
        if let Some(budget) = opts.node_budget {
            if decisions > budget {
                return Err(Error::BudgetExceeded { budget });
            }
        }
        let trail_len = st.trail.len();
        stack.push(Frame {
            var,
            trail_len,
            flipped: false,
        });
        st.assign(Literal::pos(var));
        if st.propagate_from(trail_len, 0) {
            continue;
        }
        // Backtrack until an unflipped decision can take its other value.
        loop {
            let Some(frame) = stack.pop() else {
                return Ok(SatResult::Unsat);
            };
            st.undo_to(frame.trail_len);
            if frame.flipped {
                continue;
            }
            stack.push(Frame { flipped: true, ..frame });
            st.assign(Literal::neg(frame.var));
            if st.propagate_from(frame.trail_len, 0) {
                break;
            }
        }
    }
}

fn pick_branch_var(st: &Counters, counts: &mut [u32]) -> Option<usize> {
    counts.iter_mut().for_each(|c| *c = 0);
    let mut any = false;
    for (ci, c) in st.clauses.iter().enumerate() {
        if st.n_true[ci] != 0 {
            continue;
        }
        for l in c {
            if st.value[l.var()].is_none() {
                counts[l.var()] += 1;
                any = true;
            }
        }
    }
    if !any {
        return None;
    }
    let mut best = None;
    let mut best_count = 0;
    for (v, &c) in counts.iter().enumerate() {
        if c > best_count {
            best_count = c;
            best = Some(v);
        }
    }
    best
}
