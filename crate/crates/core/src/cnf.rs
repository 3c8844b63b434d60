//! CNF formulas, DIMACS I/O and assignment evaluation.
//!
//! Variables are 0-based everywhere inside the crate. The 1-based DIMACS
//! numbering only appears in [`Literal::from_dimacs`], [`Literal::to_dimacs`]
//! and the reader/writer below.

use std::fmt;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    var: u32,
    negated: bool,
}

impl Literal {
    pub fn new(var: usize, positive: bool) -> Self {
        Literal {
            var: var as u32,
            negated: !positive,
        }
    }

    pub fn pos(var: usize) -> Self {
        Literal::new(var, true)
    }

    pub fn neg(var: usize) -> Self {
        Literal::new(var, false)
    }

    /// Build from a signed, 1-based DIMACS literal. Returns `None` for 0.
    pub fn from_dimacs(lit: i64) -> Option<Self> {
        match lit {
            0 => None,
            l => Some(Literal::new((l.unsigned_abs() - 1) as usize, l > 0)),
        }
    }

    pub fn to_dimacs(self) -> i64 {
        let v = self.var as i64 + 1;
        if self.negated {
            -v
        } else {
            v
        }
    }

    #[inline]
    pub fn var(self) -> usize {
        self.var as usize
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        !self.negated
    }

    /// +1 for a positive literal, -1 for a negated one.
    #[inline]
    pub fn polarity(self) -> i8 {
        if self.negated {
            -1
        } else {
            1
        }
    }

    /// Truth value of this literal when its variable takes `value`.
    #[inline]
    pub fn eval(self, value: bool) -> bool {
        value != self.negated
    }
}

impl std::ops::Not for Literal {
    type Output = Literal;

    fn not(self) -> Literal {
        Literal {
            var: self.var,
            negated: !self.negated,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

pub type Clause = Vec<Literal>;

/// A CNF formula: `num_vars` variables and an ordered list of non-empty clauses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Clause>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Clause>) -> Result<Self> {
        for (i, c) in clauses.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::invalid(format!("clause {i} is empty")));
            }
            if let Some(l) = c.iter().find(|l| l.var() >= num_vars) {
                return Err(Error::invalid(format!(
                    "clause {i} mentions variable {} but the formula has {num_vars}",
                    l.var() + 1
                )));
            }
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    /// Convenience constructor from DIMACS-style signed integers.
    pub fn from_dimacs_clauses(num_vars: usize, clauses: &[&[i64]]) -> Result<Self> {
        let clauses = clauses
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&l| Literal::from_dimacs(l).ok_or_else(|| Error::invalid("literal 0 inside a clause")))
                    .collect::<Result<Clause>>()
            })
            .collect::<Result<Vec<_>>>()?;
        CnfFormula::new(num_vars, clauses)
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    #[inline]
    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    #[inline]
    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn num_literals(&self) -> usize {
        self.clauses.iter().map(Vec::len).sum()
    }

    pub fn max_clause_width(&self) -> usize {
        self.clauses.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Number of clauses with no true literal under `values`. Does not check
    /// the length; see [`evaluate`] for the checked version.
    pub fn gap(&self, values: &[bool]) -> usize {
        self.clauses
            .iter()
            .filter(|c| !c.iter().any(|l| l.eval(values[l.var()])))
            .count()
    }

    /// The formula with every literal negated.
    pub fn negated(&self) -> CnfFormula {
        CnfFormula {
            num_vars: self.num_vars,
            clauses: self.clauses.iter().map(|c| c.iter().map(|&l| !l).collect()).collect(),
        }
    }

    /// Rename variables: variable `v` becomes `perm[v]`.
    pub fn permute_vars(&self, perm: &[usize]) -> CnfFormula {
        CnfFormula {
            num_vars: self.num_vars,
            clauses: self
                .clauses
                .iter()
                .map(|c| c.iter().map(|l| Literal::new(perm[l.var()], l.is_positive())).collect())
                .collect(),
        }
    }

    pub fn with_clause_order(&self, order: &[usize]) -> CnfFormula {
        CnfFormula {
            num_vars: self.num_vars,
            clauses: order.iter().map(|&i| self.clauses[i].clone()).collect(),
        }
    }
}

/// A total assignment, one boolean per variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assignment(pub Vec<bool>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[bool] {
        &self.0
    }

    pub fn hamming(&self, other: &[bool]) -> usize {
        self.0.iter().zip(other).filter(|(a, b)| a != b).count()
    }

    /// `"0110…"` encoding used in dataset manifests.
    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("bad assignment character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Assignment)
    }

    /// Enumerate all `2^n` assignments; bit `i` of the index is variable `i`.
    pub fn from_index(n: usize, index: u64) -> Self {
        Assignment((0..n).map(|i| (index >> i) & 1 == 1).collect())
    }
}

impl From<Vec<bool>> for Assignment {
    fn from(v: Vec<bool>) -> Self {
        Assignment(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub satisfied_count: usize,
    pub gap: usize,
    pub is_satisfying: bool,
}

pub fn evaluate(f: &CnfFormula, a: &Assignment) -> Result<EvalReport> {
    if a.len() != f.num_vars() {
        return Err(Error::LengthMismatch {
            expected: f.num_vars(),
            got: a.len(),
        });
    }
    let gap = f.gap(a.values());
    Ok(EvalReport {
        satisfied_count: f.num_clauses() - gap,
        gap,
        is_satisfying: gap == 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub mean: f64,
    pub stddev: f64,
}

/// Mean and sample standard deviation of the gap under uniformly random
/// assignments.
pub fn random_gap_stats(f: &CnfFormula, samples: usize, seed: u64) -> Result<GapStats> {
    if samples == 0 {
        return Err(Error::invalid("random_gap_stats needs at least one sample"));
    }
    let mut rng = rng::rng(seed);
    let mut values = vec![false; f.num_vars()];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        for v in values.iter_mut() {
            *v = rng.random_bool(0.5);
        }
        let g = f.gap(&values) as f64;
        sum += g;
        sum_sq += g * g;
    }
    let k = samples as f64;
    let mean = sum / k;
    let stddev = if samples > 1 {
        ((sum_sq - k * mean * mean).max(0.0) / (k - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(GapStats { mean, stddev })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Treat a clause-count mismatch with the header as an error instead of a warning.
    pub strict: bool,
}

pub fn parse_dimacs(text: &str) -> Result<CnfFormula> {
    parse_dimacs_with(text, ParseOptions::default())
}

pub fn parse_dimacs_with(text: &str, opts: ParseOptions) -> Result<CnfFormula> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Clause = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "duplicate header".into(),
                });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((n, _)) = header else {
            return Err(Error::Parse {
                line: line_no,
                msg: "clause data before the `p cnf` header".into(),
            });
        };
        for tok in line.split_whitespace() {
            let lit: i64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("not an integer literal: {tok:?}"),
            })?;
            match Literal::from_dimacs(lit) {
                None => {
                    if current.is_empty() {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "empty clause (a 0 with no preceding literals)".into(),
                        });
                    }
                    clauses.push(std::mem::take(&mut current));
                }
                Some(l) => {
                    if l.var() >= n {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("variable {} exceeds declared count {n}", l.var() + 1),
                        });
                    }
                    current.push(l);
                }
            }
        }
    }

    let Some((n, m)) = header else {
        return Err(Error::Parse {
            line: last_line,
            msg: "missing `p cnf` header".into(),
        });
    };
    // Tolerate a final clause without its terminating 0.
    if !current.is_empty() {
        clauses.push(current);
    }
    if clauses.len() != m {
        let msg = format!("header declares {m} clauses but {} were read", clauses.len());
        if opts.strict {
            return Err(Error::Parse { line: last_line, msg });
        }
        log::warn!("{msg}");
    }
    CnfFormula::new(n, clauses)
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize)> {
    let bad = |msg: &str| Error::Parse {
        line: line_no,
        msg: format!("malformed header {line:?}: {msg}"),
    };
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "p" || toks[1] != "cnf" {
        return Err(bad("expected `p cnf <vars> <clauses>`"));
    }
    let n = toks[2].parse().map_err(|_| bad("variable count"))?;
    let m = toks[3].parse().map_err(|_| bad("clause count"))?;
    Ok((n, m))
}

pub fn write_dimacs(f: &CnfFormula) -> String {
    let mut out = format!("p cnf {} {}\n", f.num_vars(), f.num_clauses());
    for c in f.clauses() {
        for l in c {
            out.push_str(&l.to_dimacs().to_string());
            out.push(' ');
        }
        out.push_str("0\n");
    }
    out
}

pub fn read_dimacs_file(path: impl AsRef<Path>) -> Result<CnfFormula> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dimacs(&text)
}

pub fn write_dimacs_file(path: impl AsRef<Path>, f: &CnfFormula) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_dimacs(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lits(c: &[i64]) -> Clause {
        c.iter().map(|&l| Literal::from_dimacs(l).unwrap()).collect()
    }

    #[test]
    fn parses_small_formula() {
        let f = parse_dimacs("p cnf 3 2\n1 -2 0\n2 3 0").unwrap();
        assert_eq!(f.num_vars(), 3);
        assert_eq!(f.clauses(), &[lits(&[1, -2]), lits(&[2, 3])]);
    }

    #[test]
    fn parses_single_unit_clause() {
        let f = parse_dimacs("p cnf 1 1\n1 0\n").unwrap();
        assert_eq!(f.num_vars(), 1);
        assert_eq!(f.clauses(), &[lits(&[1])]);
    }

    #[test]
    fn tolerates_comments_crlf_and_multiline_clauses() {
        let f = parse_dimacs("c hello\r\np cnf 3 2\r\n1 -2\r\n 0 2 3 0\r\n").unwrap();
        assert_eq!(f.clauses(), &[lits(&[1, -2]), lits(&[2, 3])]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(parse_dimacs("p cnf x 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_dimacs("1 2 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(
            parse_dimacs("p cnf 2 1\n1 3 0\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_dimacs("p cnf 2 2\n1 0\n0\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_dimacs("").is_err());
    }

    #[test]
    fn clause_count_mismatch_is_a_warning_unless_strict() {
        let text = "p cnf 2 3\n1 2 0\n";
        assert_eq!(parse_dimacs(text).unwrap().num_clauses(), 1);
        assert!(parse_dimacs_with(text, ParseOptions { strict: true }).is_err());
    }

    #[test]
    fn write_then_parse_round_trips() {
        let f = CnfFormula::from_dimacs_clauses(4, &[&[1, -2, 4], &[-3], &[2, 2, -2]]).unwrap();
        let text = write_dimacs(&f);
        assert_eq!(text, "p cnf 4 3\n1 -2 4 0\n-3 0\n2 2 -2 0\n");
        assert_eq!(parse_dimacs(&text).unwrap(), f);
    }

    #[test]
    fn evaluate_examples() {
        let f = CnfFormula::from_dimacs_clauses(3, &[&[1, -2], &[2, 3]]).unwrap();
        let r = evaluate(&f, &Assignment(vec![true, false, true])).unwrap();
        assert_eq!(
            r,
            EvalReport {
                satisfied_count: 2,
                gap: 0,
                is_satisfying: true
            }
        );

        let contra = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]).unwrap();
        for v in [false, true] {
            assert_eq!(evaluate(&contra, &Assignment(vec![v])).unwrap().gap, 1);
        }
        assert!(matches!(
            evaluate(&f, &Assignment(vec![true])),
            Err(Error::LengthMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn tautologies_and_duplicates_are_total() {
        let f = CnfFormula::from_dimacs_clauses(2, &[&[1, -1], &[2, 2]]).unwrap();
        assert_eq!(f.gap(&[false, false]), 1);
        assert_eq!(f.gap(&[true, true]), 0);
    }

    #[test]
    fn sat_plus_gap_is_m_exhaustively() {
        let f = CnfFormula::from_dimacs_clauses(4, &[&[1, 2], &[-1, 3, -4], &[4], &[-2, -3], &[1, -1], &[2, -4, 3]])
            .unwrap();
        for idx in 0..16 {
            let a = Assignment::from_index(4, idx);
            let r = evaluate(&f, &a).unwrap();
            assert_eq!(r.satisfied_count + r.gap, f.num_clauses());
            assert_eq!(r.is_satisfying, r.gap == 0);
        }
    }

    #[test]
    fn random_gap_of_contradiction_is_constant() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]).unwrap();
        let s = random_gap_stats(&f, 100, 3).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.stddev, 0.0);
        assert!(random_gap_stats(&f, 0, 3).is_err());
    }

    #[test]
    fn random_gap_of_single_3_clause_matches_enumeration() {
        let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2, 3]]).unwrap();
        // exact expectation by enumerating all 8 assignments
        let exact: f64 = (0..8)
            .map(|i| f.gap(Assignment::from_index(3, i).values()) as f64)
            .sum::<f64>()
            / 8.0;
        assert_eq!(exact, 0.125);
        let s = random_gap_stats(&f, 100_000, 11).unwrap();
        assert!((s.mean - exact).abs() < 0.01, "mean {}", s.mean);
        assert_eq!(s, random_gap_stats(&f, 100_000, 11).unwrap());
    }

    #[test]
    fn bitstring_round_trip() {
        let a = Assignment(vec![true, false, false, true]);
        assert_eq!(a.to_bitstring(), "1001");
        assert_eq!(Assignment::from_bitstring("1001").unwrap(), a);
        assert!(Assignment::from_bitstring("10x").is_err());
    }
}
