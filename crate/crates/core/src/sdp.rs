//! MAX-2-SAT semidefinite relaxation in the explicit unit-vector form,
//! solved by projected gradient ascent and rounded by sign or random
//! hyperplanes.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::cnf::{Assignment, CnfFormula};
use crate::error::{Error, Result};
use crate::rng;

/// Objective `Tr(W Y) + offset` over `Y_ij = <y_i, y_j>`; index 0 is the
/// reference vector `y_0` that stands for `true`.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub w: DMatrix<f64>,
    pub offset: f64,
    pub num_clauses: usize,
}

impl SdpProblem {
    pub fn num_vars(&self) -> usize {
        self.w.nrows() - 1
    }

    /// Relaxed objective at a Gram matrix `Y`.
    pub fn objective_gram(&self, y: &DMatrix<f64>) -> f64 {
        self.w.component_mul(y).sum() + self.offset
    }

    pub fn objective(&self, v: &VectorState) -> f64 {
        self.objective_gram(&(&v.vectors * v.vectors.transpose()))
    }

    /// Objective at the integral point `y_i = +-y_0`.
    pub fn integral_objective(&self, values: &[bool]) -> f64 {
        let s: Vec<f64> = std::iter::once(1.0)
            .chain(values.iter().map(|&b| if b { 1.0 } else { -1.0 }))
            .collect();
        let mut total = self.offset;
        for i in 0..s.len() {
            for j in 0..s.len() {
                total += self.w[(i, j)] * s[i] * s[j];
            }
        }
        total
    }
}

/// Coefficients of the relaxation. A unit clause on literal `s x_i`
/// contributes `(1 + s Y_0i) / 2`; a binary clause `l_a or l_b` contributes
/// `1 - (1 - s_a Y_0a)(1 - s_b Y_0b)/4` after replacing the product of the
/// two reference terms by `s_a s_b Y_ab`. Cross terms are split evenly over
/// `W_ij` and `W_ji`.
pub fn build_w(f: &CnfFormula) -> Result<SdpProblem> {
    let n = f.num_vars();
    let mut w = DMatrix::zeros(n + 1, n + 1);
    let mut offset = 0.0;
    let add = |w: &mut DMatrix<f64>, i: usize, j: usize, c: f64| {
        if i == j {
            w[(i, i)] += c;
        } else {
            w[(i, j)] += c / 2.0;
            w[(j, i)] += c / 2.0;
        }
    };
    for (k, c) in f.clauses().iter().enumerate() {
        let sign = |l: &crate::cnf::Literal| if l.is_positive() { 1.0 } else { -1.0 };
        match c.as_slice() {
            [a] => {
                offset += 0.5;
                add(&mut w, 0, a.var() + 1, sign(a) / 2.0);
            }
            [a, b] => {
                let (sa, sb) = (sign(a), sign(b));
                offset += 0.75;
                add(&mut w, 0, a.var() + 1, sa / 4.0);
                add(&mut w, 0, b.var() + 1, sb / 4.0);
                add(&mut w, a.var() + 1, b.var() + 1, -sa * sb / 4.0);
            }
            _ => {
                return Err(Error::invalid(format!(
                    "clause {k} has {} literals; the relaxation handles widths 1 and 2",
                    c.len()
                )))
            }
        }
    }
    Ok(SdpProblem {
        w,
        offset,
        num_clauses: f.num_clauses(),
    })
}

/// Unit vectors `y_0..y_n` as the rows of an `(n+1) x r` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorState {
    pub vectors: DMatrix<f64>,
}

impl VectorState {
    pub fn random(rows: usize, rank: usize, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let mut v = DMatrix::from_fn(rows, rank, |_, _| r.sample::<f64, _>(StandardNormal));
        normalize_rows(&mut v);
        VectorState { vectors: v }
    }

    pub fn row_norms(&self) -> Vec<f64> {
        self.vectors.row_iter().map(|r| r.norm()).collect()
    }

    /// `<y_0, y_i>` for `i = 1..=n`.
    pub fn margins(&self) -> Vec<f64> {
        let y0 = self.vectors.row(0);
        (1..self.vectors.nrows())
            .map(|i| self.vectors.row(i).dot(&y0))
            .collect()
    }
}

fn normalize_rows(v: &mut DMatrix<f64>) {
    for mut row in v.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        } else {
            row[0] = 1.0;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdpOptions {
    pub iters: usize,
    /// Initial step size.
    pub lr: f64,
    /// Vector dimension; `None` uses `n + 1`.
    pub rank: Option<usize>,
    /// Stop once an accepted step gains less than this.
    pub tol: f64,
    /// Halvings tried before declaring convergence.
    pub max_backtracks: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            iters: 5000,
            lr: 0.5,
            rank: None,
            tol: 1e-12,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub state: VectorState,
    /// Objective after every accepted step, starting with the initial one.
    pub trajectory: Vec<f64>,
}

impl SdpSolution {
    pub fn objective(&self) -> f64 {
        *self.trajectory.last().expect("initial objective recorded")
    }
}

/// Projected gradient ascent on the unit sphere with backtracking: a step
/// is only accepted if the objective does not decrease.
pub fn optimize_vectors(p: &SdpProblem, opts: SdpOptions, seed: u64) -> Result<SdpSolution> {
    if opts.iters == 0 || !(opts.lr > 0.0) {
        return Err(Error::invalid("need at least one iteration and a positive step"));
    }
    let rows = p.w.nrows();
    let rank = opts.rank.unwrap_or(rows).max(1);
    let mut state = VectorState::random(rows, rank, seed);
    let mut value = p.objective(&state);
    let mut trajectory = vec![value];
    let mut lr = opts.lr;
    for _ in 0..opts.iters {
        let grad = 2.0 * &p.w * &state.vectors;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let mut cand = &state.vectors + lr * &grad;
            normalize_rows(&mut cand);
            let cand = VectorState { vectors: cand };
            let v = p.objective(&cand);
            if v >= value {
                accepted = Some((cand, v));
                break;
            }
            lr /= 2.0;
        }
        let Some((cand, v)) = accepted else { break };
        let gain = v - value;
        state = cand;
        value = v;
        trajectory.push(value);
        lr *= 1.5;
        if gain < opts.tol {
            break;
        }
    }
    Ok(SdpSolution { state, trajectory })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "trials")]
pub enum Rounding {
    /// Sign of `<y_0, y_i>`.
    Sign,
    /// Best of `k` random hyperplanes by evaluated gap.
    Hyperplane(usize),
}

/// Round vectors to an assignment. Ties (zero margin) go to `true`.
pub fn round(state: &VectorState, f: &CnfFormula, mode: Rounding, seed: u64) -> Result<Assignment> {
    let n = state.vectors.nrows() - 1;
    if n != f.num_vars() {
        return Err(Error::LengthMismatch {
            expected: f.num_vars(),
            got: n,
        });
    }
    match mode {
        Rounding::Sign => Ok(Assignment(state.margins().iter().map(|&m| m >= 0.0).collect())),
        Rounding::Hyperplane(k) => {
            if k == 0 {
                return Err(Error::invalid("hyperplane rounding needs at least one trial"));
            }
            let mut r = rng::rng(seed);
            let mut best: Option<(usize, Vec<bool>)> = None;
            for _ in 0..k {
                let normal: Vec<f64> = (0..state.vectors.ncols()).map(|_| r.sample(StandardNormal)).collect();
                let side: Vec<f64> = state
                    .vectors
                    .row_iter()
                    .map(|row| row.iter().zip(&normal).map(|(a, b)| a * b).sum())
                    .collect();
                let ref_side = side[0] >= 0.0;
                let values: Vec<bool> = side[1..].iter().map(|&s| (s >= 0.0) == ref_side).collect();
                let gap = f.gap(&values);
                if best.as_ref().is_none_or(|b| gap < b.0) {
                    best = Some((gap, values));
                }
            }
            Ok(Assignment(best.expect("k >= 1").1))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpRecord {
    pub id: String,
    pub n: usize,
    pub m: usize,
    pub relaxation: f64,
    pub rounded: usize,
    pub optimum: usize,
    pub ratio: f64,
}

/// Relax, round and compare with the exact optimum.
pub fn sdp_record(id: &str, f: &CnfFormula, opts: SdpOptions, rounding: Rounding, seed: u64) -> Result<SdpRecord> {
    let p = build_w(f)?;
    let sol = optimize_vectors(&p, opts, rng::derive(seed, &[0]))?;
    let a = round(&sol.state, f, rounding, rng::derive(seed, &[1]))?;
    let m = f.num_clauses();
    let optimum = m - crate::logic::maxsat_optimum(f)?.min_gap;
    let rounded = m - f.gap(a.values());
    Ok(SdpRecord {
        id: id.to_string(),
        n: f.num_vars(),
        m,
        relaxation: sol.objective(),
        rounded,
        optimum,
        ratio: if optimum == 0 {
            1.0
        } else {
            rounded as f64 / optimum as f64
        },
    })
}

/// Random formula with `m` clauses of exactly two distinct variables.
pub fn random_max2sat(n: usize, m: usize, seed: u64) -> Result<CnfFormula> {
    if n < 2 {
        return Err(Error::invalid("MAX-2-SAT instances need at least two variables"));
    }
    let mut r = rng::rng(seed);
    let clauses = (0..m)
        .map(|_| {
            let a = r.random_range(0..n);
            let mut b = r.random_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            vec![
                crate::cnf::Literal::new(a, r.random()),
                crate::cnf::Literal::new(b, r.random()),
            ]
        })
        .collect();
    CnfFormula::new(n, clauses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_clause_coefficients() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1]]).unwrap();
        let p = build_w(&f).unwrap();
        assert_eq!(p.w[(0, 1)], 0.25);
        assert_eq!(p.w[(1, 0)], 0.25);
        assert_eq!(p.offset, 0.5);
    }

    #[test]
    fn binary_clause_coefficients() {
        let f = CnfFormula::from_dimacs_clauses(2, &[&[1, -2]]).unwrap();
        let p = build_w(&f).unwrap();
        // objective coefficients are twice the symmetric entries
        assert_eq!(2.0 * p.w[(0, 1)], 0.25);
        assert_eq!(2.0 * p.w[(0, 2)], -0.25);
        assert_eq!(2.0 * p.w[(1, 2)], 0.25);
        assert_eq!(p.offset, 0.75);
    }

    #[test]
    fn rejects_wide_clauses() {
        let f = CnfFormula::from_dimacs_clauses(3, &[&[1, 2, 3]]).unwrap();
        assert!(build_w(&f).is_err());
    }

    #[test]
    fn unit_clause_converges() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1]]).unwrap();
        let p = build_w(&f).unwrap();
        let sol = optimize_vectors(&p, SdpOptions::default(), 3).unwrap();
        assert!((sol.state.margins()[0] - 1.0).abs() < 1e-6);
        assert!(sol.trajectory.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn zero_margin_rounds_to_true() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[-1]]).unwrap();
        let state = VectorState {
            vectors: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
        };
        assert_eq!(round(&state, &f, Rounding::Sign, 0).unwrap().0, vec![true]);
    }
}
