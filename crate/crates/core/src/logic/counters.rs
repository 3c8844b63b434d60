//! Incremental clause bookkeeping shared by the DPLL and branch-and-bound
//! searches: per-clause true/false literal counts with a trail for undo.

use crate::cnf::{CnfFormula, Literal};

#[inline]
pub(crate) fn code(l: Literal) -> usize {
    2 * l.var() + usize::from(!l.is_positive())
}

pub(crate) struct Counters {
    pub clauses: Vec<Vec<Literal>>,
    /// Clause ids per literal code.
    pub occ: Vec<Vec<u32>>,
    pub n_true: Vec<u32>,
    pub n_false: Vec<u32>,
    pub value: Vec<Option<bool>>,
    pub trail: Vec<usize>,
    /// Clauses with every literal false.
    pub falsified: usize,
}

impl Counters {
    /// Duplicate literals are merged and tautologies dropped; neither changes
    /// which assignments satisfy which clauses.
    pub fn new(f: &CnfFormula) -> Self {
        let n = f.num_vars();
        let mut clauses = Vec::with_capacity(f.num_clauses());
        for c in f.clauses() {
            let mut lits: Vec<Literal> = Vec::with_capacity(c.len());
            for &l in c {
                if !lits.contains(&l) {
                    lits.push(l);
                }
            }
            if lits.iter().any(|&l| lits.contains(&!l)) {
                continue;
            }
            clauses.push(lits);
        }
        let mut occ = vec![Vec::new(); 2 * n];
        for (ci, c) in clauses.iter().enumerate() {
            for &l in c {
                occ[code(l)].push(ci as u32);
            }
        }
        let m = clauses.len();
        Counters {
            clauses,
            occ,
            n_true: vec![0; m],
            n_false: vec![0; m],
            value: vec![None; n],
            trail: Vec::with_capacity(n),
            falsified: 0,
        }
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.value.len()
    }

    /// Make `lit` true. Returns `true` if some clause became falsified.
    pub fn assign(&mut self, lit: Literal) -> bool {
        let var = lit.var();
        debug_assert!(self.value[var].is_none());
        self.value[var] = Some(lit.is_positive());
        self.trail.push(var);
        for &ci in &self.occ[code(lit)] {
            self.n_true[ci as usize] += 1;
        }
        let mut conflict = false;
        for &ci in &self.occ[code(!lit)] {
            let ci = ci as usize;
            self.n_false[ci] += 1;
            if self.n_true[ci] == 0 && self.n_false[ci] as usize == self.clauses[ci].len() {
                self.falsified += 1;
                conflict = true;
            }
        }
        conflict
    }

    fn unassign_last(&mut self) {
        let var = self.trail.pop().expect("trail not empty");
        let lit = Literal::new(var, self.value[var].expect("assigned"));
        for &ci in &self.occ[code(!lit)] {
            let ci = ci as usize;
            if self.n_true[ci] == 0 && self.n_false[ci] as usize == self.clauses[ci].len() {
                self.falsified -= 1;
            }
            self.n_false[ci] -= 1;
        }
        for &ci in &self.occ[code(lit)] {
            self.n_true[ci as usize] -= 1;
        }
        self.value[var] = None;
    }

    pub fn undo_to(&mut self, len: usize) {
        while self.trail.len() > len {
            self.unassign_last();
        }
    }

    /// The single unassigned literal of an unsatisfied clause, if it is unit.
    #[inline]
    pub fn unit_literal(&self, ci: usize) -> Option<Literal> {
        let c = &self.clauses[ci];
        if self.n_true[ci] != 0 || self.n_false[ci] as usize + 1 != c.len() {
            return None;
        }
        c.iter().copied().find(|l| self.value[l.var()].is_none())
    }

    /// Propagate units among clauses touched by the trail suffix starting at
    /// `from`. Returns `false` as soon as more than `limit` clauses are falsified.
    pub fn propagate_from(&mut self, mut from: usize, limit: usize) -> bool {
        if self.falsified > limit {
            return false;
        }
        while from < self.trail.len() {
            let var = self.trail[from];
            from += 1;
            let lit = Literal::new(var, self.value[var].expect("assigned"));
            let falsified_code = code(!lit);
            let mut i = 0;
            while i < self.occ[falsified_code].len() {
                let ci = self.occ[falsified_code][i] as usize;
                i += 1;
                if let Some(u) = self.unit_literal(ci) {
                    self.assign(u);
                    if self.falsified > limit {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Propagate every unit clause in the database, not just recently touched
    /// ones. Returns `false` as soon as more than `limit` clauses are falsified.
    pub fn propagate_all(&mut self, limit: usize) -> bool {
        if self.falsified > limit {
            return false;
        }
        let start = self.trail.len();
        for ci in 0..self.clauses.len() {
            if let Some(u) = self.unit_literal(ci) {
                self.assign(u);
                if self.falsified > limit {
                    return false;
                }
            }
        }
        self.propagate_from(start, limit)
    }
}
