//! Bipartite graph views of a CNF formula.
//!
//! * VCG: one left node per variable, one edge per literal occurrence carrying
//!   the literal's polarity (+1 / -1).
//! * LCG: `2n` left nodes, positive literal of variable `i` at index `i` and
//!   its complement at `i + n`; every edge has polarity +1.
//!
//! Edges are stored edge-major in clause order; the per-clause and per-left
//! incidence lists are CSR arrays over edge ids.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cnf::CnfFormula;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphKind {
    #[serde(rename = "LCG")]
    Lcg,
    #[serde(rename = "VCG")]
    Vcg,
}

impl std::str::FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LCG" => Ok(GraphKind::Lcg),
            "VCG" => Ok(GraphKind::Vcg),
            other => Err(Error::invalid(format!("unknown graph kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for GraphKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GraphKind::Lcg => "LCG",
            GraphKind::Vcg => "VCG",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FormulaGraph {
    pub kind: GraphKind,
    pub num_vars: usize,
    pub num_left: usize,
    pub num_clauses: usize,
    pub edge_left: Vec<usize>,
    pub edge_clause: Vec<usize>,
    pub edge_polarity: Vec<i8>,
    clause_offsets: Vec<usize>,
    left_offsets: Vec<usize>,
    left_edges: Vec<usize>,
}

impl FormulaGraph {
    fn from_edges(
        kind: GraphKind,
        num_vars: usize,
        num_left: usize,
        num_clauses: usize,
        edges: Vec<(usize, usize, i8)>,
    ) -> Self {
        let mut clause_offsets = vec![0; num_clauses + 1];
        let mut left_offsets = vec![0; num_left + 1];
        for &(l, c, _) in &edges {
            clause_offsets[c + 1] += 1;
            left_offsets[l + 1] += 1;
        }
        for i in 0..num_clauses {
            clause_offsets[i + 1] += clause_offsets[i];
        }
        for i in 0..num_left {
            left_offsets[i + 1] += left_offsets[i];
        }
        let mut fill = left_offsets.clone();
        let mut left_edges = vec![0; edges.len()];
        for (e, &(l, _, _)) in edges.iter().enumerate() {
            left_edges[fill[l]] = e;
            fill[l] += 1;
        }
        FormulaGraph {
            kind,
            num_vars,
            num_left,
            num_clauses,
            edge_left: edges.iter().map(|e| e.0).collect(),
            edge_clause: edges.iter().map(|e| e.1).collect(),
            edge_polarity: edges.iter().map(|e| e.2).collect(),
            clause_offsets,
            left_offsets,
            left_edges,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.edge_left.len()
    }

    /// Edge ids of clause `c`, in literal order.
    pub fn clause_edges(&self, c: usize) -> std::ops::Range<usize> {
        // edges are emitted clause by clause, so each clause is a contiguous run
        self.clause_offsets[c]..self.clause_offsets[c + 1]
    }

    /// Edge ids incident to left node `l`, in clause order.
    pub fn left_edges(&self, l: usize) -> &[usize] {
        &self.left_edges[self.left_offsets[l]..self.left_offsets[l + 1]]
    }

    pub fn left_degree(&self, l: usize) -> usize {
        self.left_offsets[l + 1] - self.left_offsets[l]
    }
}

pub fn build(kind: GraphKind, f: &CnfFormula) -> FormulaGraph {
    match kind {
        GraphKind::Vcg => build_vcg(f),
        GraphKind::Lcg => build_lcg(f),
    }
}

pub fn build_vcg(f: &CnfFormula) -> FormulaGraph {
    let edges = f
        .clauses()
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.iter().map(move |l| (l.var(), ci, l.polarity())))
        .collect();
    FormulaGraph::from_edges(GraphKind::Vcg, f.num_vars(), f.num_vars(), f.num_clauses(), edges)
}

pub fn build_lcg(f: &CnfFormula) -> FormulaGraph {
    let n = f.num_vars();
    let edges = f
        .clauses()
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            c.iter().map(move |l| {
                let idx = if l.is_positive() { l.var() } else { l.var() + n };
                (idx, ci, 1)
            })
        })
        .collect();
    FormulaGraph::from_edges(GraphKind::Lcg, n, 2 * n, f.num_clauses(), edges)
}

/// The involution pairing each literal node with its complement (`i <-> i+n`).
pub fn flip_pairing(g: &FormulaGraph) -> Result<Vec<usize>> {
    if g.kind != GraphKind::Lcg {
        return Err(Error::invalid("flip pairing is only defined on literal-clause graphs"));
    }
    let n = g.num_vars;
    Ok((0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect())
}

/// A disjoint union of formula graphs, the unit of batched message passing.
#[derive(Clone, Debug)]
pub struct Batch {
    pub kind: GraphKind,
    pub num_left: usize,
    pub num_clauses: usize,
    pub num_vars: usize,
    pub edge_left: Arc<[usize]>,
    pub edge_clause: Arc<[usize]>,
    pub edge_polarity: Arc<[i8]>,
    /// Batch variable of each edge's literal and that literal's sign,
    /// independent of graph kind.
    pub edge_var: Arc<[usize]>,
    pub edge_sign: Arc<[i8]>,
    /// Per-instance start of its left / clause / variable rows (len = instances + 1).
    pub left_offsets: Vec<usize>,
    pub clause_offsets: Vec<usize>,
    pub var_offsets: Vec<usize>,
    /// Left rows holding each variable's embedding (all rows for VCG,
    /// positive literals for LCG), in batch variable order.
    pub var_rows: Arc<[usize]>,
    /// Literal complement permutation over left rows (LCG only).
    pub flip: Option<Arc<[usize]>>,
    /// Instance id of each left / clause row.
    pub left_instance: Arc<[usize]>,
    pub clause_instance: Arc<[usize]>,
}

impl Batch {
    pub fn single(g: &FormulaGraph) -> Batch {
        Batch::union(std::slice::from_ref(g))
    }

    pub fn from_formulas(kind: GraphKind, formulas: &[&CnfFormula]) -> Batch {
        let graphs: Vec<FormulaGraph> = formulas.iter().map(|f| build(kind, f)).collect();
        Batch::union(&graphs)
    }

    /// # Panics
    /// If `graphs` is empty or mixes graph kinds.
    pub fn union(graphs: &[FormulaGraph]) -> Batch {
        assert!(!graphs.is_empty(), "empty batch");
        let kind = graphs[0].kind;
        assert!(graphs.iter().all(|g| g.kind == kind), "mixed graph kinds in one batch");
        let mut b = BatchBuilder::start();
        for (i, g) in graphs.iter().enumerate() {
            let (lo, co, vo) = (b.num_left, b.num_clauses, b.num_vars);
            for e in 0..g.num_edges() {
                let l = g.edge_left[e];
                b.edge_left.push(lo + l);
                b.edge_clause.push(co + g.edge_clause[e]);
                b.edge_polarity.push(g.edge_polarity[e]);
                let (var, sign) = match kind {
                    GraphKind::Vcg => (l, g.edge_polarity[e]),
                    GraphKind::Lcg if l < g.num_vars => (l, 1),
                    GraphKind::Lcg => (l - g.num_vars, -1),
                };
                b.edge_var.push(vo + var);
                b.edge_sign.push(sign);
            }
            match kind {
                GraphKind::Vcg => b.var_rows.extend((0..g.num_vars).map(|v| lo + v)),
                GraphKind::Lcg => {
                    b.var_rows.extend((0..g.num_vars).map(|v| lo + v));
                    let n = g.num_vars;
                    b.flip
                        .extend((0..2 * n).map(|j| lo + if j < n { j + n } else { j - n }));
                }
            }
            b.left_instance.extend(std::iter::repeat_n(i, g.num_left));
            b.clause_instance.extend(std::iter::repeat_n(i, g.num_clauses));
            b.num_left += g.num_left;
            b.num_clauses += g.num_clauses;
            b.num_vars += g.num_vars;
            b.left_offsets.push(b.num_left);
            b.clause_offsets.push(b.num_clauses);
            b.var_offsets.push(b.num_vars);
        }
        Batch {
            kind,
            num_left: b.num_left,
            num_clauses: b.num_clauses,
            num_vars: b.num_vars,
            edge_left: b.edge_left.into(),
            edge_clause: b.edge_clause.into(),
            edge_polarity: b.edge_polarity.into(),
            edge_var: b.edge_var.into(),
            edge_sign: b.edge_sign.into(),
            left_offsets: b.left_offsets,
            clause_offsets: b.clause_offsets,
            var_offsets: b.var_offsets,
            var_rows: b.var_rows.into(),
            flip: (kind == GraphKind::Lcg).then(|| b.flip.into()),
            left_instance: b.left_instance.into(),
            clause_instance: b.clause_instance.into(),
        }
    }

    pub fn num_instances(&self) -> usize {
        self.var_offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.edge_left.len()
    }

    pub fn vars_of(&self, instance: usize) -> std::ops::Range<usize> {
        self.var_offsets[instance]..self.var_offsets[instance + 1]
    }

    pub fn left_rows_of(&self, instance: usize) -> std::ops::Range<usize> {
        self.left_offsets[instance]..self.left_offsets[instance + 1]
    }

    pub fn clause_rows_of(&self, instance: usize) -> std::ops::Range<usize> {
        self.clause_offsets[instance]..self.clause_offsets[instance + 1]
    }
}

#[derive(Default)]
struct BatchBuilder {
    num_left: usize,
    num_clauses: usize,
    num_vars: usize,
    edge_left: Vec<usize>,
    edge_clause: Vec<usize>,
    edge_polarity: Vec<i8>,
    edge_var: Vec<usize>,
    edge_sign: Vec<i8>,
    left_offsets: Vec<usize>,
    clause_offsets: Vec<usize>,
    var_offsets: Vec<usize>,
    var_rows: Vec<usize>,
    flip: Vec<usize>,
    left_instance: Vec<usize>,
    clause_instance: Vec<usize>,
}

impl BatchBuilder {
    fn start() -> Self {
        BatchBuilder {
            left_offsets: vec![0],
            clause_offsets: vec![0],
            var_offsets: vec![0],
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> CnfFormula {
        // (¬x1 ∨ x2) ∧ (x2 ∨ ¬x3) ∧ (x1 ∨ x3)
        CnfFormula::from_dimacs_clauses(3, &[&[-1, 2], &[2, -3], &[1, 3]]).unwrap()
    }

    #[test]
    fn vcg_of_figure_formula() {
        let g = build_vcg(&fig1());
        assert_eq!((g.num_left, g.num_clauses, g.num_edges()), (3, 3, 6));
        let pol = |v: usize, c: usize| {
            (0..g.num_edges())
                .find(|&e| g.edge_left[e] == v && g.edge_clause[e] == c)
                .map(|e| g.edge_polarity[e])
        };
        assert_eq!(pol(0, 0), Some(-1));
        assert_eq!(pol(0, 2), Some(1));
        assert_eq!(pol(0, 1), None);
    }

    #[test]
    fn lcg_of_figure_formula() {
        let g = build_lcg(&fig1());
        assert_eq!((g.num_left, g.num_clauses, g.num_edges()), (6, 3, 6));
        assert!(g.edge_polarity.iter().all(|&p| p == 1));
        // ¬x2 (index 4) never occurs but still has a node
        assert_eq!(g.left_degree(4), 0);
        assert_eq!(flip_pairing(&g).unwrap(), vec![3, 4, 5, 0, 1, 2]);
    }

    #[test]
    fn single_literal_and_mixed_polarity() {
        let g = build_vcg(&CnfFormula::from_dimacs_clauses(1, &[&[1]]).unwrap());
        assert_eq!((g.num_edges(), g.edge_polarity[0]), (1, 1));
        let g = build_vcg(&CnfFormula::from_dimacs_clauses(1, &[&[1, -1]]).unwrap());
        assert_eq!(g.edge_polarity, vec![1, -1]);
        assert_eq!(g.left_edges(0), &[0, 1]);
    }

    #[test]
    fn flip_is_rejected_on_vcg() {
        assert!(flip_pairing(&build_vcg(&fig1())).is_err());
    }

    #[test]
    fn flip_neighbours_are_clauses_of_the_complement() {
        let f = CnfFormula::from_dimacs_clauses(4, &[&[1, -2, 3], &[-1, 4], &[2, -3, -4], &[-2]]).unwrap();
        let g = build_lcg(&f);
        let flip = flip_pairing(&g).unwrap();
        for l in 0..g.num_left {
            assert_eq!(flip[flip[l]], l);
            let lit = if l < 4 {
                crate::cnf::Literal::pos(l)
            } else {
                crate::cnf::Literal::neg(l - 4)
            };
            let expected: Vec<usize> = f
                .clauses()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.contains(&!lit))
                .map(|(i, _)| i)
                .collect();
            let got: Vec<usize> = g.left_edges(flip[l]).iter().map(|&e| g.edge_clause[e]).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn incidence_lists_are_transposes() {
        let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2, 3], &[-1, -1], &[3, -2]]).unwrap();
        for g in [build_vcg(&f), build_lcg(&f)] {
            assert_eq!(g.num_edges(), f.num_literals());
            for c in 0..g.num_clauses {
                let lits: Vec<usize> = g.clause_edges(c).map(|e| g.edge_left[e]).collect();
                assert_eq!(lits.len(), f.clauses()[c].len());
                for e in g.clause_edges(c) {
                    assert!(g.left_edges(g.edge_left[e]).contains(&e));
                }
            }
            let total: usize = (0..g.num_left).map(|l| g.left_degree(l)).sum();
            assert_eq!(total, g.num_edges());
        }
    }

    #[test]
    fn batch_offsets_and_flip() {
        let a = CnfFormula::from_dimacs_clauses(2, &[&[1, -2]]).unwrap();
        let b = CnfFormula::from_dimacs_clauses(3, &[&[3], &[-1, 2]]).unwrap();
        let batch = Batch::from_formulas(GraphKind::Lcg, &[&a, &b]);
        assert_eq!(batch.num_left, 10);
        assert_eq!(batch.left_offsets, vec![0, 4, 10]);
        assert_eq!(batch.var_offsets, vec![0, 2, 5]);
        assert_eq!(&batch.var_rows[..], &[0, 1, 4, 5, 6]);
        assert_eq!(&batch.flip.as_ref().unwrap()[..], &[2, 3, 0, 1, 7, 8, 9, 4, 5, 6]);
        // clause 0 of b is the unit (x3) -> left row 4 + 2
        assert_eq!(batch.edge_left[2], 6);
        assert_eq!(batch.edge_clause[2], 1);
        assert_eq!(&batch.edge_var[..], &[0, 1, 4, 2, 3]);
        assert_eq!(&batch.edge_sign[..], &[1, -1, 1, -1, 1]);
    }
}
