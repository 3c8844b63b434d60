use serde::{Deserialize, Serialize};

use crate::cnf::{Assignment, Clause, CnfFormula};

/// Per-variable `Some(value)` or `None` for unassigned.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialAssignment(pub Vec<Option<bool>>);

impl PartialAssignment {
    pub fn empty(n: usize) -> Self {
        PartialAssignment(vec![None; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, var: usize) -> Option<bool> {
        self.0[var]
    }

    pub fn set(&mut self, var: usize, value: bool) {
        self.0[var] = Some(value);
    }

    pub fn assigned_count(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }

    /// Complete with `fill` for unassigned positions.
    pub fn complete_with(&self, fill: &[bool]) -> Assignment {
        Assignment(self.0.iter().zip(fill).map(|(v, &d)| v.unwrap_or(d)).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationKind {
    /// Every clause is satisfied.
    Solved,
    /// Some clause has all literals false.
    Conflict,
    /// Fixed point reached with clauses left; none of them is unit.
    Simplified,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PropagationOutcome {
    pub kind: PropagationKind,
    pub extended: PartialAssignment,
    /// Unsatisfied clauses restricted to their unassigned literals, over the
    /// same variable index space as the input. Empty on `Solved` and `Conflict`.
    pub residual: CnfFormula,
    /// Index of the falsified clause when `kind == Conflict`.
    pub conflict_clause: Option<usize>,
}

enum ClauseState {
    Satisfied,
    Falsified,
    Unit(crate::cnf::Literal),
    Open,
}

fn clause_state(c: &Clause, values: &[Option<bool>]) -> ClauseState {
    let mut unassigned = None;
    let mut distinct_unassigned = 0;
    for &l in c {
        match values[l.var()] {
            Some(v) if l.eval(v) => return ClauseState::Satisfied,
            Some(_) => {}
            None => {
                if unassigned != Some(l) {
                    distinct_unassigned += 1;
                    unassigned = Some(l);
                }
            }
        }
    }
    match (distinct_unassigned, unassigned) {
        (0, _) => ClauseState::Falsified,
        (1, Some(l)) => ClauseState::Unit(l),
        _ => ClauseState::Open,
    }
}

/// Propagate unit clauses to a fixed point starting from `p`.
pub fn unit_propagate(f: &CnfFormula, p: &PartialAssignment) -> PropagationOutcome {
    debug_assert_eq!(p.len(), f.num_vars());
    let mut values = p.0.clone();
    loop {
        let mut changed = false;
        for (ci, c) in f.clauses().iter().enumerate() {
            match clause_state(c, &values) {
                ClauseState::Falsified => {
                    return PropagationOutcome {
                        kind: PropagationKind::Conflict,
                        extended: PartialAssignment(values),
                        residual: CnfFormula::new(f.num_vars(), Vec::new()).expect("empty formula"),
                        conflict_clause: Some(ci),
                    };
                }
                ClauseState::Unit(l) => {
                    values[l.var()] = Some(l.is_positive());
                    changed = true;
                }
                ClauseState::Satisfied | ClauseState::Open => {}
            }
        }
        if !changed {
            break;
        }
    }

    let mut residual = Vec::new();
    for c in f.clauses() {
        if let ClauseState::Open = clause_state(c, &values) {
            let mut rc: Clause = Vec::with_capacity(c.len());
            for &l in c {
                if values[l.var()].is_none() && !rc.contains(&l) {
                    rc.push(l);
                }
            }
            residual.push(rc);
        }
    }
    let kind = if residual.is_empty() {
        PropagationKind::Solved
    } else {
        PropagationKind::Simplified
    };
    PropagationOutcome {
        kind,
        extended: PartialAssignment(values),
        residual: CnfFormula::new(f.num_vars(), residual).expect("residual clauses are valid"),
        conflict_clause: None,
    }
}
