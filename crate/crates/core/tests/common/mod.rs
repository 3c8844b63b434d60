#![allow(dead_code)]

use satgnn::autodiff::{Tape, Tensor, Var};
use satgnn::cnf::CnfFormula;
use satgnn::model::Model;

pub const FD_STEP: f64 = 1e-4;

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference when both
/// are negligible.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Analytic vs central-difference gradient of a scalar function of the
/// given input tensors. Returns the worst relative error over inputs.
pub fn check_inputs(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.gradients(out).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; inputs[k].len()]);
        let mut numeric = Vec::with_capacity(inputs[k].len());
        for j in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= FD_STEP;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * FD_STEP));
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Same check over every trainable parameter of a model.
pub fn check_params(model: &Model<f64>, loss: impl Fn(&Model<f64>, &mut Tape<f64>) -> Var) -> f64 {
    let mut m = model.clone();
    let mut tape = Tape::new();
    let out = loss(&m, &mut tape);
    tape.backward(out, &mut m.params).unwrap();
    let eval = |m: &Model<f64>| {
        let mut tape = Tape::new();
        let out = loss(m, &mut tape);
        tape.value(out).item()
    };
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let ids: Vec<_> = m.params.ids().filter(|&id| m.params.is_trainable(id)).collect();
    for id in ids {
        let g = m.params.grad(id).map(|g| g.data().to_vec());
        let len = m.params.value(id).len();
        analytic.extend(g.unwrap_or_else(|| vec![0.0; len]));
        for j in 0..len {
            let mut p = model.clone();
            p.params.value_mut(id).data_mut()[j] += FD_STEP;
            let mut q = model.clone();
            q.params.value_mut(id).data_mut()[j] -= FD_STEP;
            numeric.push((eval(&p) - eval(&q)) / (2.0 * FD_STEP));
        }
    }
    rel_err(&analytic, &numeric)
}

/// A fixed 5-variable formula with both polarities and mixed widths.
pub fn five_var_formula() -> CnfFormula {
    CnfFormula::from_dimacs_clauses(
        5,
        &[&[1, -2, 3], &[-1, 4], &[2, -3, -5], &[-4, 5], &[3, 4, -1], &[-2, -5]],
    )
    .unwrap()
}

pub fn tensor(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut r = satgnn::rng::rng(seed);
    Tensor::randn(rows, cols, &mut r)
}

pub type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

/// One gradient-check case per tape op, each reduced to a scalar through a
/// random linear functional so every output entry is exercised.
pub fn op_cases() -> Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> {
    use std::sync::Arc;
    // weighted sum with fixed random weights
    fn probe(tape: &mut Tape<f64>, v: Var, seed: u64) -> Var {
        let [r, c] = tape.shape(v);
        let w = tape.constant(tensor(r, c, 1000 + seed));
        let p = tape.mul(v, w).unwrap();
        tape.sum(p)
    }
    let positive = |r, c, s| tensor(r, c, s).map(|x| x.abs() + 0.5);
    let unit = |r, c, s| tensor(r, c, s).map(|x| 1.0 / (1.0 + (-x).exp()));
    let mut cases: Vec<(&'static str, Vec<Tensor<f64>>, OpFn)> = vec![
        (
            "matmul",
            vec![tensor(3, 4, 1), tensor(4, 2, 2)],
            Box::new(|t, v| {
                let y = t.matmul(v[0], v[1]).unwrap();
                probe(t, y, 0)
            }),
        ),
        (
            "add",
            vec![tensor(3, 2, 3), tensor(3, 2, 4)],
            Box::new(|t, v| {
                let y = t.add(v[0], v[1]).unwrap();
                probe(t, y, 1)
            }),
        ),
        (
            "sub",
            vec![tensor(3, 2, 5), tensor(3, 2, 6)],
            Box::new(|t, v| {
                let y = t.sub(v[0], v[1]).unwrap();
                probe(t, y, 2)
            }),
        ),
        (
            "mul",
            vec![tensor(3, 2, 7), tensor(3, 2, 8)],
            Box::new(|t, v| {
                let y = t.mul(v[0], v[1]).unwrap();
                probe(t, y, 3)
            }),
        ),
        (
            "add_row",
            vec![tensor(4, 3, 9), tensor(1, 3, 10)],
            Box::new(|t, v| {
                let y = t.add_row(v[0], v[1]).unwrap();
                probe(t, y, 4)
            }),
        ),
        (
            "affine",
            vec![tensor(2, 3, 11)],
            Box::new(|t, v| {
                let y = t.affine(v[0], -1.7, 0.3);
                probe(t, y, 5)
            }),
        ),
        (
            "row_affine",
            vec![tensor(3, 2, 12)],
            Box::new(|t, v| {
                let y = t
                    .row_affine(v[0], Arc::from(vec![0.5, -2.0, 1.5]), Arc::from(vec![1.0, 0.0, -1.0]))
                    .unwrap();
                probe(t, y, 6)
            }),
        ),
        (
            "concat_cols",
            vec![tensor(3, 2, 13), tensor(3, 1, 14)],
            Box::new(|t, v| {
                let y = t.concat_cols(&[v[0], v[1]]).unwrap();
                probe(t, y, 7)
            }),
        ),
        (
            "concat_rows",
            vec![tensor(2, 3, 15), tensor(1, 3, 16)],
            Box::new(|t, v| {
                let y = t.concat_rows(&[v[0], v[1]]).unwrap();
                probe(t, y, 8)
            }),
        ),
        (
            "slice_cols",
            vec![tensor(3, 5, 17)],
            Box::new(|t, v| {
                let y = t.slice_cols(v[0], 1, 3).unwrap();
                probe(t, y, 9)
            }),
        ),
        (
            "gather",
            vec![tensor(4, 3, 18)],
            Box::new(|t, v| {
                let y = t.gather(v[0], Arc::from(vec![3, 0, 0, 2, 3])).unwrap();
                probe(t, y, 10)
            }),
        ),
        (
            "segment_sum",
            vec![tensor(5, 3, 19)],
            Box::new(|t, v| {
                let y = t.segment_sum(v[0], Arc::from(vec![1, 0, 1, 3, 1]), 4).unwrap();
                probe(t, y, 11)
            }),
        ),
        (
            "segment_mean",
            vec![tensor(5, 2, 20)],
            Box::new(|t, v| {
                let y = t.segment_mean(v[0], Arc::from(vec![0, 0, 2, 2, 2]), 3).unwrap();
                probe(t, y, 12)
            }),
        ),
        (
            "tanh",
            vec![tensor(3, 3, 21)],
            Box::new(|t, v| {
                let y = t.tanh(v[0]);
                probe(t, y, 13)
            }),
        ),
        (
            "relu",
            vec![tensor(3, 3, 22)],
            Box::new(|t, v| {
                let y = t.relu(v[0]);
                probe(t, y, 14)
            }),
        ),
        (
            "sigmoid",
            vec![tensor(3, 3, 23)],
            Box::new(|t, v| {
                let y = t.sigmoid(v[0]);
                probe(t, y, 15)
            }),
        ),
        (
            "exp",
            vec![tensor(3, 2, 24)],
            Box::new(|t, v| {
                let y = t.exp(v[0]);
                probe(t, y, 16)
            }),
        ),
        (
            "log",
            vec![positive(3, 2, 25)],
            Box::new(|t, v| {
                let y = t.log(v[0]);
                probe(t, y, 17)
            }),
        ),
        (
            "clamp",
            vec![tensor(4, 3, 26)],
            Box::new(|t, v| {
                let y = t.clamp(v[0], -0.5, 0.7);
                probe(t, y, 18)
            }),
        ),
        (
            "l2_normalize",
            vec![tensor(4, 3, 27)],
            Box::new(|t, v| {
                let y = t.l2_normalize(v[0], 1e-12);
                probe(t, y, 19)
            }),
        ),
        (
            "softmax",
            vec![tensor(4, 3, 28)],
            Box::new(|t, v| {
                let y = t.softmax(v[0]);
                probe(t, y, 20)
            }),
        ),
        (
            "cross_entropy",
            vec![tensor(4, 3, 29)],
            Box::new(|t, v| {
                t.cross_entropy(v[0], Arc::from(vec![2, 0, 1, 1]), Arc::from(vec![0.1, 0.4, 0.2, 0.3]))
                    .unwrap()
            }),
        ),
        (
            "binary_cross_entropy",
            vec![unit(4, 1, 30)],
            Box::new(|t, v| {
                t.bce(v[0], Arc::from(vec![1.0, 0.0, 0.3, 1.0]), Arc::from(vec![0.25; 4]))
                    .unwrap()
            }),
        ),
        (
            "mse",
            vec![tensor(3, 2, 31)],
            Box::new(|t, v| t.mse(v[0], Arc::from(vec![0.1, -0.2, 0.3, 0.0, 1.0, -1.0])).unwrap()),
        ),
        (
            "sum",
            vec![tensor(3, 2, 32)],
            Box::new(|t, v| {
                let y = t.mul(v[0], v[0]).unwrap();
                t.sum(y)
            }),
        ),
        (
            "mean",
            vec![tensor(3, 2, 33)],
            Box::new(|t, v| {
                let y = t.mul(v[0], v[0]).unwrap();
                t.mean(y)
            }),
        ),
    ];
    cases.shrink_to_fit();
    cases
}

/// Random CNF with `m` clauses of width 1..=max_width over `n` variables.
pub fn random_formula(n: usize, m: usize, max_width: usize, seed: u64) -> CnfFormula {
    use rand::Rng;
    let mut r = satgnn::rng::rng(seed);
    let clauses: Vec<Vec<i64>> = (0..m)
        .map(|_| {
            let k = r.random_range(1..=max_width.min(n));
            (0..k)
                .map(|_| {
                    let v = r.random_range(1..=n as i64);
                    if r.random::<bool>() {
                        v
                    } else {
                        -v
                    }
                })
                .collect()
        })
        .collect();
    let refs: Vec<&[i64]> = clauses.iter().map(Vec::as_slice).collect();
    CnfFormula::from_dimacs_clauses(n, &refs).unwrap()
}

/// Every assignment of `n` variables, in index order (bit i = variable i).
pub fn all_assignments(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << n).map(move |k| (0..n).map(|i| k >> i & 1 == 1).collect())
}

/// Brute-force minimum gap.
pub fn brute_min_gap(f: &CnfFormula) -> usize {
    all_assignments(f.num_vars()).map(|a| f.gap(&a)).min().unwrap()
}

/// Brute-force smallest Hamming distance from `target` among optimal assignments.
pub fn brute_closest_distance(f: &CnfFormula, target: &[bool]) -> usize {
    let best = brute_min_gap(f);
    all_assignments(f.num_vars())
        .filter(|a| f.gap(a) == best)
        .map(|a| a.iter().zip(target).filter(|(x, y)| x != y).count())
        .min()
        .unwrap()
}
