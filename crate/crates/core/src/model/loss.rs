//! The four training objectives, built from tape ops so they are
//! differentiable end to end.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tape, Var};
use crate::cnf::CnfFormula;
use crate::error::{Error, Result};
use crate::graph::Batch;
use crate::logic::{closest_assignment_with, MaxSatOptions};

/// Probability clamp for the unsupervised objective.
pub const PROB_CLAMP: f64 = 1e-6;
/// Floor on clause satisfaction values before the log.
pub const VALUE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignmentLoss {
    #[serde(rename = "CE")]
    Ce,
    #[serde(rename = "MSE")]
    Mse,
}

impl std::str::FromStr for AssignmentLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(AssignmentLoss::Ce),
            "MSE" => Ok(AssignmentLoss::Mse),
            other => Err(Error::invalid(format!("unknown assignment loss {other:?}"))),
        }
    }
}

/// Mean binary cross-entropy of per-instance probabilities against labels.
pub fn sat_bce<T: Scalar>(tape: &mut Tape<T>, probs: Var, labels: &[bool]) -> Result<Var> {
    let n = labels.len().max(1) as f64;
    let y: Arc<[T]> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let w: Arc<[T]> = vec![T::of(1.0 / n); labels.len()].into();
    tape.bce(probs, y, w)
}

/// Per-variable loss against a fixed target, averaged over variables.
/// `Mse` compares the softmax probabilities with the one-hot target.
pub fn assignment<T: Scalar>(tape: &mut Tape<T>, logits: Var, target: &[bool], mode: AssignmentLoss) -> Result<Var> {
    let n = tape.shape(logits)[0];
    if target.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: target.len(),
        });
    }
    match mode {
        AssignmentLoss::Ce => {
            let t: Arc<[usize]> = target.iter().map(|&b| usize::from(b)).collect();
            tape.cross_entropy_mean(logits, t)
        }
        AssignmentLoss::Mse => {
            let probs = tape.softmax(logits);
            let one_hot: Arc<[T]> = target
                .iter()
                .flat_map(|&b| {
                    if b {
                        [T::zero(), T::one()]
                    } else {
                        [T::one(), T::zero()]
                    }
                })
                .collect();
            tape.mse(probs, one_hot)
        }
    }
}

/// `-sum_c log V_c(x)` with `V_c = 1 - prod_{i in c+} (1 - x_i) prod_{i in c-} x_i`,
/// summed per instance and averaged over the batch.
pub fn unsupervised<T: Scalar>(tape: &mut Tape<T>, logits: Var, batch: &Batch) -> Result<Var> {
    let probs = tape.softmax(logits);
    let x = tape.slice_cols(probs, 1, 1)?;
    let x = tape.clamp(x, T::of(PROB_CLAMP), T::of(1.0 - PROB_CLAMP));
    let per_edge = tape.gather(x, batch.edge_var.clone())?;
    // factor = 1 - x for a positive literal, x for a negative one
    let mul: Arc<[T]> = batch
        .edge_sign
        .iter()
        .map(|&s| if s > 0 { -T::one() } else { T::one() })
        .collect();
    let add: Arc<[T]> = batch
        .edge_sign
        .iter()
        .map(|&s| if s > 0 { T::one() } else { T::zero() })
        .collect();
    let factor = tape.row_affine(per_edge, mul, add)?;
    let log_factor = tape.log(factor);
    let log_unsat = tape.segment_sum(log_factor, batch.edge_clause.clone(), batch.num_clauses)?;
    let unsat = tape.exp(log_unsat);
    let value = tape.affine(unsat, -T::one(), T::one());
    let value = tape.clamp(value, T::of(VALUE_FLOOR), T::one());
    let logv = tape.log(value);
    let total = tape.sum(logv);
    Ok(tape.scale(total, T::of(-1.0 / batch.num_instances().max(1) as f64)))
}

/// Closest optimal assignment to the current prediction, per instance,
/// concatenated in batch variable order.
pub fn closest_targets(
    batch: &Batch,
    formulas: &[&CnfFormula],
    p_true: &[f64],
    opts: MaxSatOptions,
) -> Result<Vec<bool>> {
    if formulas.len() != batch.num_instances() {
        return Err(Error::LengthMismatch {
            expected: batch.num_instances(),
            got: formulas.len(),
        });
    }
    let mut out = Vec::with_capacity(batch.num_vars);
    for (i, f) in formulas.iter().enumerate() {
        let a = closest_assignment_with(f, &p_true[batch.vars_of(i)], opts)?;
        out.extend(a.0);
    }
    Ok(out)
}

/// Cross-entropy against the closest optimal assignment, recomputed from
/// the logits on every call. Returns the loss and the targets used.
pub fn closest<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    batch: &Batch,
    formulas: &[&CnfFormula],
    opts: MaxSatOptions,
) -> Result<(Var, Vec<bool>)> {
    let z = tape.value(logits);
    let p_true: Vec<f64> = (0..z.rows())
        .map(|r| {
            let (a, b) = (z.get(r, 0).f64(), z.get(r, 1).f64());
            1.0 / (1.0 + (a - b).exp())
        })
        .collect();
    let target = closest_targets(batch, formulas, &p_true, opts)?;
    let loss = assignment(tape, logits, &target, AssignmentLoss::Ce)?;
    Ok((loss, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::graph::GraphKind;

    fn logits_for(p_true: &[f64]) -> Tensor<f64> {
        // logits (0, log(p/(1-p))) give softmax column 1 = p
        let rows: Vec<f64> = p_true.iter().flat_map(|&p| [0.0, (p / (1.0 - p)).ln()]).collect();
        Tensor::from_f64(p_true.len(), 2, &rows).unwrap()
    }

    #[test]
    fn sat_bce_reference_values() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::from_f64(1, 1, &[0.5]).unwrap());
        let l = sat_bce(&mut tape, p, &[true]).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
        let p = tape.constant(Tensor::from_f64(2, 1, &[1.0, 0.0]).unwrap());
        let l = sat_bce(&mut tape, p, &[true, false]).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn assignment_ce_uniform_is_ln2() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::zeros(3, 2));
        let l = assignment(&mut tape, z, &[true, false, true], AssignmentLoss::Ce).unwrap();
        assert!((tape.value(l).item() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(assignment(&mut tape, z, &[true], AssignmentLoss::Ce).is_err());
    }

    #[test]
    fn assignment_mse_reference() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(logits_for(&[0.8, 0.3]));
        let l = assignment(&mut tape, z, &[true, true], AssignmentLoss::Mse).unwrap();
        let expected = ((0.2f64).powi(2) + (0.7f64).powi(2)) / 2.0;
        assert!((tape.value(l).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn unsupervised_contradiction_is_2_ln2() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1], &[-1]]).unwrap();
        for kind in [GraphKind::Vcg, GraphKind::Lcg] {
            let b = Batch::from_formulas(kind, &[&f]);
            let mut tape = Tape::<f64>::new();
            let z = tape.constant(logits_for(&[0.5]));
            let l = unsupervised(&mut tape, z, &b).unwrap();
            assert!((tape.value(l).item() - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn unsupervised_unit_clause_tends_to_zero() {
        let f = CnfFormula::from_dimacs_clauses(1, &[&[1]]).unwrap();
        let b = Batch::from_formulas(GraphKind::Vcg, &[&f]);
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let mut tape = Tape::<f64>::new();
            let z = tape.constant(logits_for(&[1.0 - eps]));
            let v = unsupervised(&mut tape, z, &b).unwrap();
            let l = tape.value(v).item();
            assert!(l < last);
            last = l;
        }
        assert!(last < 2e-4);
    }

    #[test]
    fn closest_keeps_a_satisfying_prediction() {
        let f = CnfFormula::from_dimacs_clauses(2, &[&[1, 2], &[-1, -2]]).unwrap();
        let b = Batch::from_formulas(GraphKind::Vcg, &[&f]);
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(logits_for(&[0.9, 0.2]));
        let (_, t) = closest(&mut tape, z, &b, &[&f], MaxSatOptions::default()).unwrap();
        assert_eq!(t, vec![true, false]);
    }
}
