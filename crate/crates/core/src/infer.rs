//! Test-time solving: per-iteration decoding with early stopping,
//! resampling over initializations, iteration/sample sweeps, k-means
//! decoding of embeddings and PCA trajectory export.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Scalar, Tensor};
use crate::cnf::{Assignment, CnfFormula};
use crate::error::{Error, Result};
use crate::graph::Batch;
use crate::model::Model;
use crate::rng;

/// Instances evaluated together in one disjoint-union batch.
pub const EVAL_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub early_stop: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 100,
            early_stop: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    SatFound,
    NoWitness,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// First decode that reached `best_gap`.
    pub assignment: Assignment,
    /// Running minimum of the per-iteration gap.
    pub best_gap: usize,
    /// Iteration (1-based) at which `best_gap` was first reached.
    pub best_iter: usize,
    pub steps_used: usize,
    pub gap_trajectory: Vec<usize>,
}

struct Tracker {
    best_gap: usize,
    best_iter: usize,
    assignment: Vec<bool>,
    trajectory: Vec<usize>,
    done: bool,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            best_gap: usize::MAX,
            best_iter: 0,
            assignment: Vec::new(),
            trajectory: Vec::new(),
            done: false,
        }
    }

    fn observe(&mut self, iter: usize, gap: usize, values: &[bool], early_stop: bool) {
        if self.done {
            return;
        }
        self.trajectory.push(gap);
        if gap < self.best_gap {
            self.best_gap = gap;
            self.best_iter = iter;
            self.assignment = values.to_vec();
        }
        if gap == 0 && early_stop {
            self.done = true;
        }
    }

    fn finish(self) -> SolveResult {
        SolveResult {
            status: if self.best_gap == 0 {
                SolveStatus::SatFound
            } else {
                SolveStatus::NoWitness
            },
            assignment: Assignment(self.assignment),
            best_gap: self.best_gap,
            best_iter: self.best_iter,
            steps_used: self.trajectory.len(),
            gap_trajectory: self.trajectory,
        }
    }
}

fn check_opts(opts: &SolveOptions) -> Result<()> {
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    Ok(())
}

/// Solve several formulas, each from its own seeded initialization.
/// Results do not depend on how instances are grouped beyond the fixed
/// chunking by [`EVAL_CHUNK`].
pub fn solve_batch<T: Scalar>(
    model: &Model<T>,
    formulas: &[&CnfFormula],
    opts: SolveOptions,
    seeds: &[u64],
) -> Result<Vec<SolveResult>> {
    check_opts(&opts)?;
    if seeds.len() != formulas.len() {
        return Err(Error::LengthMismatch {
            expected: formulas.len(),
            got: seeds.len(),
        });
    }
    let kind = model.config().graph_kind;
    let mut out = Vec::with_capacity(formulas.len());
    for (fs, ss) in formulas.chunks(EVAL_CHUNK).zip(seeds.chunks(EVAL_CHUNK)) {
        let batch = Batch::from_formulas(kind, fs);
        let mut trackers: Vec<Tracker> = fs.iter().map(|_| Tracker::new()).collect();
        model.rollout(&batch, model.init_state(&batch, ss), opts.max_iters, |it, _, pred| {
            for (i, (f, tr)) in fs.iter().zip(trackers.iter_mut()).enumerate() {
                let values = &pred.hard[batch.vars_of(i)];
                tr.observe(it, f.gap(values), values, opts.early_stop);
            }
            !trackers.iter().all(|t| t.done)
        })?;
        out.extend(trackers.into_iter().map(Tracker::finish));
    }
    Ok(out)
}

pub fn solve<T: Scalar>(model: &Model<T>, f: &CnfFormula, opts: SolveOptions, seed: u64) -> Result<SolveResult> {
    Ok(solve_batch(model, &[f], opts, &[seed])?.remove(0))
}

/// Seed of resampling attempt `j`; attempt 0 uses the seed itself.
pub fn attempt_seed(seed: u64, j: usize) -> u64 {
    if j == 0 {
        seed
    } else {
        rng::derive(seed, &[j as u64])
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleResult {
    pub best: SolveResult,
    /// Index of the attempt that produced `best`.
    pub best_attempt: usize,
    pub attempts_used: usize,
}

/// Best of up to `k` attempts with different initializations, stopping at
/// the first satisfying attempt.
pub fn resample_solve<T: Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    opts: SolveOptions,
    k: usize,
    seed: u64,
) -> Result<ResampleResult> {
    Ok(resample_batch(model, &[f], opts, k, &[seed])?.remove(0))
}

pub fn resample_batch<T: Scalar>(
    model: &Model<T>,
    formulas: &[&CnfFormula],
    opts: SolveOptions,
    k: usize,
    seeds: &[u64],
) -> Result<Vec<ResampleResult>> {
    if k == 0 {
        return Err(Error::invalid("at least one attempt is required"));
    }
    let mut best: Vec<Option<ResampleResult>> = vec![None; formulas.len()];
    for j in 0..k {
        let open: Vec<usize> = (0..formulas.len())
            .filter(|&i| best[i].as_ref().is_none_or(|r| r.best.best_gap > 0))
            .collect();
        if open.is_empty() {
            break;
        }
        let fs: Vec<&CnfFormula> = open.iter().map(|&i| formulas[i]).collect();
        let ss: Vec<u64> = open.iter().map(|&i| attempt_seed(seeds[i], j)).collect();
        for (&i, r) in open.iter().zip(solve_batch(model, &fs, opts, &ss)?) {
            match &mut best[i] {
                Some(b) => {
                    b.attempts_used = j + 1;
                    if r.best_gap < b.best.best_gap {
                        b.best = r;
                        b.best_attempt = j;
                    }
                }
                slot @ None => {
                    *slot = Some(ResampleResult {
                        best: r,
                        best_attempt: 0,
                        attempts_used: 1,
                    })
                }
            }
        }
    }
    Ok(best.into_iter().map(|b| b.expect("every instance attempted")).collect())
}

/// Per-instance evaluation row; every aggregate metric is a function of these.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub n: usize,
    pub m: usize,
    /// Ground-truth label when known.
    pub sat: Option<bool>,
    pub best_gap: usize,
    pub steps: usize,
    /// The model's verdict: a zero-gap decode, or the classifier's call.
    pub predicted_sat: bool,
    pub attempts: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionMode {
    /// SAT declared only on a verified zero-gap decode.
    #[serde(rename = "assignment")]
    Assignment,
    /// SAT declared by the satisfiability classifier head.
    #[serde(rename = "classifier")]
    Classifier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub decision_mode: DecisionMode,
    pub instances: usize,
    pub avg_gap: f64,
    pub sat_gap: Option<f64>,
    pub unsat_gap: Option<f64>,
    pub sat_accuracy: Option<f64>,
    pub decision_accuracy: Option<f64>,
    /// Share of UNSAT instances that reached gap 1.
    pub unsat_gap1: Option<f64>,
    pub sat_steps_avg: Option<f64>,
    pub sat_steps_median: Option<f64>,
    pub unsat_steps_avg: Option<f64>,
    pub unsat_steps_median: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    })
}

pub fn aggregate(records: &[EvalRecord], mode: DecisionMode) -> Metrics {
    let gaps = |pred: &dyn Fn(&EvalRecord) -> bool| -> Vec<f64> {
        records.iter().filter(|r| pred(r)).map(|r| r.best_gap as f64).collect()
    };
    let sat: Vec<&EvalRecord> = records.iter().filter(|r| r.sat == Some(true)).collect();
    let unsat: Vec<&EvalRecord> = records.iter().filter(|r| r.sat == Some(false)).collect();
    let labelled: Vec<&EvalRecord> = records.iter().filter(|r| r.sat.is_some()).collect();
    let frac = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    let solved: Vec<&&EvalRecord> = sat.iter().filter(|r| r.best_gap == 0).collect();
    let sat_steps: Vec<f64> = solved.iter().map(|r| r.steps as f64).collect();
    let unsat_steps: Vec<f64> = unsat.iter().map(|r| r.steps as f64).collect();
    Metrics {
        decision_mode: mode,
        instances: records.len(),
        avg_gap: mean(&gaps(&|_| true)).unwrap_or(0.0),
        sat_gap: mean(&gaps(&|r| r.sat == Some(true))),
        unsat_gap: mean(&gaps(&|r| r.sat == Some(false))),
        sat_accuracy: frac(solved.len(), sat.len()),
        decision_accuracy: frac(
            labelled.iter().filter(|r| Some(r.predicted_sat) == r.sat).count(),
            labelled.len(),
        ),
        unsat_gap1: frac(unsat.iter().filter(|r| r.best_gap == 1).count(), unsat.len()),
        sat_steps_avg: mean(&sat_steps),
        sat_steps_median: median(&sat_steps),
        unsat_steps_avg: mean(&unsat_steps),
        unsat_steps_median: median(&unsat_steps),
    }
}

/// An instance to evaluate: formula, optional label and a stable id.
pub struct EvalItem<'a> {
    pub id: &'a str,
    pub formula: &'a CnfFormula,
    pub sat: Option<bool>,
}

/// Per-instance seeds derived from a root seed and the instance position.
pub fn instance_seeds(root: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| rng::derive(root, &[i as u64])).collect()
}

/// Assignment-based evaluation with `samples` attempts per instance.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    items: &[EvalItem],
    opts: SolveOptions,
    samples: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let fs: Vec<&CnfFormula> = items.iter().map(|it| it.formula).collect();
    let seeds = instance_seeds(seed, items.len());
    let results = resample_batch(model, &fs, opts, samples, &seeds)?;
    Ok(items
        .iter()
        .zip(results)
        .map(|(it, r)| EvalRecord {
            id: it.id.to_string(),
            n: it.formula.num_vars(),
            m: it.formula.num_clauses(),
            sat: it.sat,
            best_gap: r.best.best_gap,
            steps: r.best.best_iter,
            predicted_sat: r.best.best_gap == 0,
            attempts: r.attempts_used,
        })
        .collect())
}

/// Classifier-based evaluation: verdict from the satisfiability head after
/// `iters` rounds; the gap column comes from the readout decode at the end.
pub fn evaluate_classifier<T: Scalar>(
    model: &Model<T>,
    items: &[EvalItem],
    iters: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let seeds = instance_seeds(seed, items.len());
    let kind = model.config().graph_kind;
    let mut out = Vec::with_capacity(items.len());
    for (chunk, ss) in items.chunks(EVAL_CHUNK).zip(seeds.chunks(EVAL_CHUNK)) {
        let fs: Vec<&CnfFormula> = chunk.iter().map(|it| it.formula).collect();
        let batch = Batch::from_formulas(kind, &fs);
        let (probs, state) = model.classify(&batch, ss, iters)?;
        let (pred, _) = model.predict_with_state(&batch, state, 0)?;
        for (i, it) in chunk.iter().enumerate() {
            out.push(EvalRecord {
                id: it.id.to_string(),
                n: it.formula.num_vars(),
                m: it.formula.num_clauses(),
                sat: it.sat,
                best_gap: it.formula.gap(&pred.hard[batch.vars_of(i)]),
                steps: iters,
                predicted_sat: probs[i] >= 0.5,
                attempts: 1,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub iters: usize,
    pub samples: usize,
    pub avg_gap: f64,
    pub sat_accuracy: Option<f64>,
    pub decision_accuracy: Option<f64>,
}

/// Metrics for every (iterations, samples) pair. Each attempt runs once to
/// the largest iteration level; a cell's gap for an instance is the minimum
/// over its first `samples` attempts of the running-minimum gap at `iters`,
/// which is exactly what a standalone run with those settings returns.
pub fn sweep<T: Scalar>(
    model: &Model<T>,
    items: &[EvalItem],
    iter_levels: &[usize],
    sample_levels: &[usize],
    seed: u64,
) -> Result<Vec<SweepCell>> {
    if iter_levels.is_empty() || sample_levels.is_empty() || iter_levels.contains(&0) || sample_levels.contains(&0) {
        return Err(Error::invalid("sweep levels must be non-empty and positive"));
    }
    let max_iters = *iter_levels.iter().max().expect("non-empty");
    let max_samples = *sample_levels.iter().max().expect("non-empty");
    let fs: Vec<&CnfFormula> = items.iter().map(|it| it.formula).collect();
    let seeds = instance_seeds(seed, items.len());
    let opts = SolveOptions {
        max_iters,
        early_stop: true,
    };
    // running_min[j][i][L-1]: attempt j, instance i, after L iterations
    let mut running_min: Vec<Vec<Vec<usize>>> = Vec::with_capacity(max_samples);
    for j in 0..max_samples {
        let ss: Vec<u64> = seeds.iter().map(|&s| attempt_seed(s, j)).collect();
        let results = solve_batch(model, &fs, opts, &ss)?;
        running_min.push(
            results
                .iter()
                .map(|r| {
                    let mut best = usize::MAX;
                    let mut v: Vec<usize> = r
                        .gap_trajectory
                        .iter()
                        .map(|&g| {
                            best = best.min(g);
                            best
                        })
                        .collect();
                    v.resize(max_iters, best);
                    v
                })
                .collect(),
        );
    }
    let mut cells = Vec::new();
    for &k in sample_levels {
        for &l in iter_levels {
            let records: Vec<EvalRecord> = items
                .iter()
                .enumerate()
                .map(|(i, it)| {
                    let gap = (0..k).map(|j| running_min[j][i][l - 1]).min().expect("k >= 1");
                    EvalRecord {
                        id: it.id.to_string(),
                        n: it.formula.num_vars(),
                        m: it.formula.num_clauses(),
                        sat: it.sat,
                        best_gap: gap,
                        steps: l,
                        predicted_sat: gap == 0,
                        attempts: k,
                    }
                })
                .collect();
            let m = aggregate(&records, DecisionMode::Assignment);
            cells.push(SweepCell {
                iters: l,
                samples: k,
                avg_gap: m.avg_gap,
                sat_accuracy: m.sat_accuracy,
                decision_accuracy: m.decision_accuracy,
            });
        }
    }
    Ok(cells)
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Dataset(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Result of two-means clustering of embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub labels: Vec<usize>,
    pub centers: [Vec<f64>; 2],
    pub iterations: usize,
}

pub const KMEANS_MAX_ITERS: usize = 50;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm with k = 2. The first center is a seeded random row,
/// the second the row farthest from it (lowest index on ties).
pub fn kmeans2(rows: &[Vec<f64>], seed: u64) -> KMeans {
    let n = rows.len();
    if n == 0 {
        return KMeans {
            labels: vec![],
            centers: [vec![], vec![]],
            iterations: 0,
        };
    }
    let mut r = rng::rng(seed);
    let first = r.random_range(0..n);
    let mut far = first;
    let mut far_d = -1.0;
    for (i, row) in rows.iter().enumerate() {
        let d = sq_dist(row, &rows[first]);
        if d > far_d {
            far_d = d;
            far = i;
        }
    }
    let mut centers = [rows[first].clone(), rows[far].clone()];
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        iterations += 1;
        let next: Vec<usize> = rows
            .iter()
            .map(|row| usize::from(sq_dist(row, &centers[1]) < sq_dist(row, &centers[0])))
            .collect();
        let changed = next != labels;
        labels = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = rows
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(r, _)| r)
                .collect();
            if members.is_empty() {
                continue;
            }
            for (k, v) in center.iter_mut().enumerate() {
                *v = members.iter().map(|m| m[k]).sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    KMeans {
        labels,
        centers,
        iterations,
    }
}

fn tensor_rows<T: Scalar>(t: &Tensor<T>) -> Vec<Vec<f64>> {
    (0..t.rows())
        .map(|r| t.row(r).iter().map(|x| x.f64()).collect())
        .collect()
}

/// Decode an assignment from variable embeddings by two-means clustering.
/// Both cluster-to-value mappings are evaluated and the lower-gap one is
/// returned (cluster 0 = true on ties). A degenerate clustering falls back
/// to all-true vs all-false.
pub fn cluster_decode<T: Scalar>(embeddings: &Tensor<T>, f: &CnfFormula, seed: u64) -> Result<Assignment> {
    if embeddings.rows() != f.num_vars() {
        return Err(Error::LengthMismatch {
            expected: f.num_vars(),
            got: embeddings.rows(),
        });
    }
    let n = f.num_vars();
    let candidates: Vec<Vec<bool>> = if n <= 1 {
        vec![vec![true; n], vec![false; n]]
    } else {
        let km = kmeans2(&tensor_rows(embeddings), seed);
        if km.labels.iter().all(|&l| l == km.labels[0]) {
            vec![vec![true; n], vec![false; n]]
        } else {
            let a: Vec<bool> = km.labels.iter().map(|&l| l == 0).collect();
            let b: Vec<bool> = a.iter().map(|&x| !x).collect();
            vec![a, b]
        }
    };
    let best = candidates.into_iter().min_by_key(|c| f.gap(c)).expect("two candidates");
    Ok(Assignment(best))
}

/// Run message passing and cluster-decode the variable embeddings after
/// every round, keeping the running minimum gap.
pub fn cluster_solve<T: Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    opts: SolveOptions,
    seed: u64,
) -> Result<SolveResult> {
    check_opts(&opts)?;
    let batch = Batch::from_formulas(model.config().graph_kind, &[f]);
    let mut tr = Tracker::new();
    let mut err = None;
    model.rollout(
        &batch,
        model.init_state(&batch, &[seed]),
        opts.max_iters,
        |it, state, _| {
            match cluster_decode(&state.variable_rows(&batch), f, rng::derive(seed, &[it as u64])) {
                Ok(a) => tr.observe(it, f.gap(a.values()), a.values(), opts.early_stop),
                Err(e) => {
                    err = Some(e);
                    return false;
                }
            }
            !tr.done
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(tr.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub node: usize,
    pub x: f64,
    pub y: f64,
    pub cluster: usize,
    pub gap: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotVariance {
    pub iter: usize,
    /// Variance along the first two principal axes.
    pub pc1: f64,
    pub pc2: f64,
    /// Share of total variance captured by the two axes.
    pub explained: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub variance: Vec<SnapshotVariance>,
    pub gaps: Vec<usize>,
}

/// Two-component PCA of the rows: (projections, pc1 var, pc2 var, share).
pub fn pca2(rows: &[Vec<f64>]) -> (Vec<[f64; 2]>, f64, f64, f64) {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return (vec![[0.0, 0.0]; n], 0.0, 0.0, 0.0);
    }
    let mean: Vec<f64> = (0..d)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, d, |i, k| rows[i][k] - mean[k]);
    let denom = (n.max(2) - 1) as f64;
    let cov = (x.transpose() * &x) / denom;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let axis = |k: usize| order.get(k).map(|&c| eig.eigenvectors.column(c).into_owned());
    let (a1, a2) = (axis(0), axis(1));
    let var = |k: usize| order.get(k).map_or(0.0, |&c| eig.eigenvalues[c].max(0.0));
    let proj = (0..n)
        .map(|i| {
            let row = x.row(i);
            let p = |a: &Option<nalgebra::DVector<f64>>| a.as_ref().map_or(0.0, |v| row.dot(&v.transpose()));
            [p(&a1), p(&a2)]
        })
        .collect();
    let (v1, v2) = (var(0), var(1));
    let share = if total > 0.0 { (v1 + v2) / total } else { 0.0 };
    (proj, v1, v2, share)
}

/// Per-iteration 2-D PCA projections of the variable embeddings, their
/// two-means cluster labels and the readout gap at that iteration.
pub fn export_trajectory<T: Scalar>(model: &Model<T>, f: &CnfFormula, t: usize, seed: u64) -> Result<Trajectory> {
    if t < 2 {
        return Err(Error::invalid("a trajectory needs at least 2 iterations"));
    }
    let batch = Batch::from_formulas(model.config().graph_kind, &[f]);
    let mut rows = Vec::new();
    let mut variance = Vec::new();
    let mut gaps = Vec::new();
    model.rollout(&batch, model.init_state(&batch, &[seed]), t, |it, state, pred| {
        let emb = tensor_rows(&state.variable_rows(&batch));
        let gap = f.gap(&pred.hard);
        gaps.push(gap);
        let (proj, v1, v2, share) = pca2(&emb);
        let km = kmeans2(&emb, rng::derive(seed, &[it as u64]));
        for (node, p) in proj.iter().enumerate() {
            rows.push(TrajectoryRow {
                iter: it,
                node,
                x: p[0],
                y: p[1],
                cluster: km.labels[node],
                gap,
            });
        }
        variance.push(SnapshotVariance {
            iter: it,
            pc1: v1,
            pc2: v2,
            explained: share,
        });
        true
    })?;
    Ok(Trajectory { rows, variance, gaps })
}
