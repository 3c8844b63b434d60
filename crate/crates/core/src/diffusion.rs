//! Categorical diffusion over Boolean assignments: noise schedule, forward
//! corruption, exact two-state posteriors, denoiser training, sampling and
//! the unit-propagation guided recursive search.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{lr_schedule, Tape, DEFAULT_EMA_BETA, DEFAULT_ETA_MIN, DEFAULT_LR};
use crate::cnf::{Assignment, CnfFormula, Literal};
use crate::error::{Error, Result};
use crate::generate::{Dataset, LabeledInstance};
use crate::graph::Batch;
use crate::infer::{SolveResult, SolveStatus, EVAL_CHUNK};
use crate::logic::{unit_propagate, PartialAssignment, PropagationKind};
use crate::model::{loss, AssignmentLoss, Model, ModelConfig, MpState, SAT_HEAD_PREFIX};
use crate::rng::{self, Rng};

/// Linear β ramp with closed-form cumulative flip probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    /// `keep[t] = prod_{s <= t} (1 - 2 beta_s)`, with `keep[0] = 1`.
    keep: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            steps: 50,
            beta_min: 0.02,
            beta_max: 0.35,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<NoiseSchedule> {
        build_schedule(self.steps, self.beta_min, self.beta_max)
    }
}

pub fn build_schedule(steps: usize, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::invalid("a schedule needs at least one step"));
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 0.5) {
        return Err(Error::invalid(format!(
            "need 0 < beta_min <= beta_max < 0.5, got {beta_min} and {beta_max}"
        )));
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let mut keep = Vec::with_capacity(steps + 1);
    keep.push(1.0);
    for b in &betas {
        let last = *keep.last().expect("non-empty");
        keep.push(last * (1.0 - 2.0 * b));
    }
    Ok(NoiseSchedule { betas, keep })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `beta_t` for `1 <= t <= T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// Probability that a value differs between times `s < t`.
    pub fn flip_between(&self, s: usize, t: usize) -> f64 {
        (1.0 - self.keep[t] / self.keep[s]) / 2.0
    }

    /// Off-diagonal of the cumulative matrix at `t` (0 at `t = 0`).
    pub fn flip_prob(&self, t: usize) -> f64 {
        self.flip_between(0, t)
    }

    pub fn q(&self, t: usize) -> [[f64; 2]; 2] {
        let b = self.beta(t);
        [[1.0 - b, b], [b, 1.0 - b]]
    }

    pub fn q_bar(&self, t: usize) -> [[f64; 2]; 2] {
        let a = self.flip_prob(t);
        [[1.0 - a, a], [a, 1.0 - a]]
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::invalid(format!("timestep {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }

    /// Inference timesteps `T = tau_0 > tau_1 > ... > tau_k = 0` for `k`
    /// evenly spaced diffusion steps.
    pub fn inference_timesteps(&self, k: usize) -> Result<Vec<usize>> {
        let t = self.steps();
        if k == 0 || k > t {
            return Err(Error::invalid(format!("diffusion steps must lie in 1..={t}")));
        }
        Ok((0..=k)
            .map(|i| ((t * (k - i)) as f64 / k as f64).round() as usize)
            .collect())
    }
}

/// Flip every value independently with the cumulative flip probability at `t`.
pub fn forward_corrupt(x0: &[bool], t: usize, schedule: &NoiseSchedule, seed: u64) -> Result<Vec<bool>> {
    schedule.check_t(t)?;
    let a = schedule.flip_prob(t);
    let mut r = rng::rng(seed);
    Ok(x0.iter().map(|&x| x ^ (r.random::<f64>() < a)).collect())
}

/// `P(x_s = true | x_t, p_hat)` per variable, marginalising the exact
/// two-state posterior over `x_0` with predicted weights `p_true`.
pub fn posterior_jump(x_t: &[bool], p_true: &[f64], t: usize, s: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_t(t)?;
    if s >= t {
        return Err(Error::invalid(format!("posterior target {s} must precede {t}")));
    }
    if x_t.len() != p_true.len() {
        return Err(Error::LengthMismatch {
            expected: x_t.len(),
            got: p_true.len(),
        });
    }
    let a_s = schedule.flip_prob(s);
    let b = schedule.flip_between(s, t);
    let trans = |from: bool, to: bool, p: f64| if from == to { 1.0 - p } else { p };
    Ok(x_t
        .iter()
        .zip(p_true)
        .map(|(&xt, &p1)| {
            [(false, 1.0 - p1), (true, p1)]
                .iter()
                .map(|&(x0, w)| {
                    let num = |xs: bool| trans(x0, xs, a_s) * trans(xs, xt, b);
                    let (n0, n1) = (num(false), num(true));
                    w * n1 / (n0 + n1)
                })
                .sum()
        })
        .collect())
}

pub fn posterior_probs(x_t: &[bool], p_true: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    posterior_jump(x_t, p_true, t, t - 1, schedule)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    /// Sample each variable from its posterior.
    Categorical,
    /// Take the more likely posterior value (ties go to `true`).
    Argmax,
    /// Skip the posterior and move to the rounded x0 prediction.
    Rounding,
}

impl std::str::FromStr for PosteriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "categorical" => Ok(PosteriorMode::Categorical),
            "argmax" => Ok(PosteriorMode::Argmax),
            "rounding" => Ok(PosteriorMode::Rounding),
            other => Err(Error::invalid(format!("unknown posterior mode {other:?}"))),
        }
    }
}

/// Next state of the reverse chain from `t` to `s`.
pub fn reverse_step(
    x_t: &[bool],
    p_true: &[f64],
    t: usize,
    s: usize,
    schedule: &NoiseSchedule,
    mode: PosteriorMode,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    if mode == PosteriorMode::Rounding {
        return Ok(p_true.iter().map(|&p| p >= 0.5).collect());
    }
    let probs = posterior_jump(x_t, p_true, t, s, schedule)?;
    Ok(match mode {
        PosteriorMode::Categorical => probs.iter().map(|&p| rng.random::<f64>() < p).collect(),
        _ => probs.iter().map(|&p| p >= 0.5).collect(),
    })
}

/// One reverse step `t -> t - 1`.
pub fn posterior_step(
    x_t: &[bool],
    p_true: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    mode: PosteriorMode,
    rng: &mut Rng,
) -> Result<Vec<bool>> {
    reverse_step(x_t, p_true, t, t - 1, schedule, mode, rng)
}

/// Initial state embedding `values` (clause rows seeded by `seeds`).
pub fn embedded_state<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    batch: &Batch,
    values: &[bool],
    seeds: &[u64],
) -> Result<MpState<T>> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let s = model.embed_values(&mut tape, &p, batch, values, seeds)?;
    Ok(MpState::read(&tape, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionRun {
    pub gnn_steps: usize,
    pub diffusion_steps: usize,
    pub posterior: PosteriorMode,
    pub schedule: ScheduleConfig,
    /// Ascending belief thresholds for the UP-guided search.
    pub thresholds: Vec<f64>,
    /// Recursion depth of the UP-guided search; defaults to the number of
    /// diffusion steps.
    pub max_depth: Option<usize>,
    /// Hard cap on recursive calls per instance.
    pub max_calls: usize,
}

impl Default for DiffusionRun {
    fn default() -> Self {
        DiffusionRun {
            gnn_steps: 25,
            diffusion_steps: 10,
            posterior: PosteriorMode::Categorical,
            schedule: ScheduleConfig::default(),
            thresholds: vec![0.6, 0.75, 0.9],
            max_depth: None,
            max_calls: 2000,
        }
    }
}

impl DiffusionRun {
    pub fn validate(&self) -> Result<()> {
        if self.gnn_steps == 0 || self.diffusion_steps == 0 || self.max_calls == 0 {
            return Err(Error::invalid(
                "GNN steps, diffusion steps and the call cap must be positive",
            ));
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|&t| !(t > 0.5 && t < 1.0))
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("thresholds must be strictly ascending in (0.5, 1)"));
        }
        if self.depth() == 0 || self.depth() > self.diffusion_steps {
            return Err(Error::invalid("max depth must lie in 1..=diffusion_steps"));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.max_depth.unwrap_or(self.diffusion_steps)
    }
}

fn random_values(n: usize, seed: u64) -> Vec<bool> {
    let mut r = rng::rng(seed);
    (0..n).map(|_| r.random::<bool>()).collect()
}

/// Denoise `values` on `batch`: embed, run `steps` rounds, return P(true).
fn denoise<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    batch: &Batch,
    values: &[bool],
    seeds: &[u64],
    steps: usize,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let s = model.embed_values(&mut tape, &p, batch, values, seeds)?;
    let s = model.run(&mut tape, &p, batch, s, steps)?;
    let logits = model.readout(&mut tape, &p, batch, s.h_left)?;
    let z = tape.value(logits);
    Ok((0..z.rows())
        .map(|r| 1.0 / (1.0 + (z.get(r, 0).f64() - z.get(r, 1).f64()).exp()))
        .collect())
}

fn hard(p_true: &[f64]) -> Vec<bool> {
    p_true.iter().map(|&p| p >= 0.5).collect()
}

/// Reverse diffusion from a uniform random assignment. The x0 prediction is
/// decoded after every diffusion step; instances stop at gap 0.
pub fn diffusion_solve_batch<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    formulas: &[&CnfFormula],
    run: &DiffusionRun,
    seeds: &[u64],
) -> Result<Vec<SolveResult>> {
    if run.gnn_steps == 0 || run.diffusion_steps == 0 {
        return Err(Error::invalid("GNN and diffusion steps must be positive"));
    }
    if seeds.len() != formulas.len() {
        return Err(Error::LengthMismatch {
            expected: formulas.len(),
            got: seeds.len(),
        });
    }
    let schedule = run.schedule.build()?;
    let taus = schedule.inference_timesteps(run.diffusion_steps)?;
    let mut out = Vec::with_capacity(formulas.len());
    for (fs, ss) in formulas.chunks(EVAL_CHUNK).zip(seeds.chunks(EVAL_CHUNK)) {
        let batch = Batch::from_formulas(model.config().graph_kind, fs);
        let mut xs: Vec<Vec<bool>> = fs
            .iter()
            .zip(ss)
            .map(|(f, &s)| random_values(f.num_vars(), rng::derive(s, &[0])))
            .collect();
        let mut rngs: Vec<Rng> = ss.iter().map(|&s| rng::rng_at(s, &[2])).collect();
        let mut best: Vec<(usize, usize, Vec<bool>)> = vec![(usize::MAX, 0, Vec::new()); fs.len()];
        let mut traj: Vec<Vec<usize>> = vec![Vec::new(); fs.len()];
        let mut done = vec![false; fs.len()];
        for k in 0..run.diffusion_steps {
            let values: Vec<bool> = xs.iter().flatten().copied().collect();
            let step_seeds: Vec<u64> = ss.iter().map(|&s| rng::derive(s, &[1, k as u64])).collect();
            let p_true = denoise(model, &batch, &values, &step_seeds, run.gnn_steps)?;
            for i in 0..fs.len() {
                if done[i] {
                    continue;
                }
                let p = &p_true[batch.vars_of(i)];
                let decode = hard(p);
                let gap = fs[i].gap(&decode);
                traj[i].push(gap);
                if gap < best[i].0 {
                    best[i] = (gap, k + 1, decode);
                }
                if gap == 0 {
                    done[i] = true;
                    continue;
                }
                xs[i] = reverse_step(&xs[i], p, taus[k], taus[k + 1], &schedule, run.posterior, &mut rngs[i])?;
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        for ((gap, iter, a), t) in best.into_iter().zip(traj) {
            out.push(SolveResult {
                status: if gap == 0 {
                    SolveStatus::SatFound
                } else {
                    SolveStatus::NoWitness
                },
                assignment: Assignment(a),
                best_gap: gap,
                best_iter: iter,
                steps_used: t.len(),
                gap_trajectory: t,
            });
        }
    }
    Ok(out)
}

pub fn diffusion_solve<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    run: &DiffusionRun,
    seed: u64,
) -> Result<SolveResult> {
    Ok(diffusion_solve_batch(model, &[f], run, &[seed])?.remove(0))
}

/// Assignment-model inference that, every `period` rounds, replaces the
/// variable embeddings by the embedding of the rounded prediction. Starts
/// from the same embedded random assignment as [`diffusion_solve`] and
/// returns the rounded assignment at each period boundary.
pub fn periodic_rounding_solve<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    total_iters: usize,
    period: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    if period == 0 || total_iters < period {
        return Err(Error::invalid("need 1 <= period <= total iterations"));
    }
    let batch = Batch::from_formulas(model.config().graph_kind, &[f]);
    let mut values = random_values(f.num_vars(), rng::derive(seed, &[0]));
    let mut boundaries = Vec::new();
    let mut state = embedded_state(model, &batch, &values, &[rng::derive(seed, &[1, 0])])?;
    let mut last = Vec::new();
    for it in 1..=total_iters {
        state = model.rollout(&batch, state, 1, |_, _, pred| {
            last = pred.hard.clone();
            true
        })?;
        if it % period == 0 {
            values = last.clone();
            boundaries.push(values.clone());
            let k = (it / period) as u64;
            state = embedded_state(model, &batch, &values, &[rng::derive(seed, &[1, k])])?;
        }
    }
    Ok(boundaries)
}

/// Per-step x0 decodes of a deterministic rounding diffusion run, for
/// comparison with [`periodic_rounding_solve`]; no early stopping.
pub fn rounding_trajectory<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    gnn_steps: usize,
    diffusion_steps: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let batch = Batch::from_formulas(model.config().graph_kind, &[f]);
    let mut x = random_values(f.num_vars(), rng::derive(seed, &[0]));
    let mut out = Vec::with_capacity(diffusion_steps);
    for k in 0..diffusion_steps {
        let p = denoise(model, &batch, &x, &[rng::derive(seed, &[1, k as u64])], gnn_steps)?;
        x = hard(&p);
        out.push(x.clone());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpResult {
    pub result: SolveResult,
    pub calls: usize,
}

struct UpSearch<'a, T: crate::autodiff::Scalar> {
    model: &'a Model<T>,
    root: &'a CnfFormula,
    run: &'a DiffusionRun,
    schedule: NoiseSchedule,
    taus: Vec<usize>,
    rng: Rng,
    seed: u64,
    calls: usize,
    best_gap: usize,
    best: Vec<bool>,
    gaps: Vec<usize>,
    fill: Vec<bool>,
}

/// Renumber the variables that occur in `f` densely; returns the compact
/// formula and the old index of every new variable.
fn compact(f: &CnfFormula) -> (CnfFormula, Vec<usize>) {
    let mut map = vec![usize::MAX; f.num_vars()];
    let mut back = Vec::new();
    let clauses = f
        .clauses()
        .iter()
        .map(|c| {
            c.iter()
                .map(|l| {
                    if map[l.var()] == usize::MAX {
                        map[l.var()] = back.len();
                        back.push(l.var());
                    }
                    Literal::new(map[l.var()], l.is_positive())
                })
                .collect()
        })
        .collect();
    (
        CnfFormula::new(back.len(), clauses).expect("renumbered clauses are valid"),
        back,
    )
}

impl<T: crate::autodiff::Scalar> UpSearch<'_, T> {
    /// Record a full candidate built from `fixed` (root indices) plus
    /// `local` values for the variables in `to_root`.
    fn candidate(&mut self, fixed: &[Option<bool>], local: &[bool], to_root: &[usize]) -> Vec<bool> {
        let mut full: Vec<bool> = fixed.iter().zip(&self.fill).map(|(v, &d)| v.unwrap_or(d)).collect();
        for (&v, &r) in local.iter().zip(to_root) {
            full[r] = v;
        }
        let gap = self.root.gap(&full);
        self.gaps.push(gap);
        if gap < self.best_gap {
            self.best_gap = gap;
            self.best = full.clone();
        }
        full
    }

    /// One recursive call: a diffusion step on `f` at `depth` from noisy
    /// values `x`. `fixed` holds root-level assignments made so far.
    fn call(
        &mut self,
        f: &CnfFormula,
        to_root: &[usize],
        x: &[bool],
        fixed: &[Option<bool>],
        depth: usize,
    ) -> Result<Option<Vec<bool>>> {
        if self.calls >= self.run.max_calls {
            return Ok(None);
        }
        self.calls += 1;
        let batch = Batch::from_formulas(self.model.config().graph_kind, &[f]);
        let seed = rng::derive(self.seed, &[1, self.calls as u64]);
        let p = denoise(self.model, &batch, x, &[seed], self.run.gnn_steps)?;
        let decode = hard(&p);
        if self.root.gap(&self.candidate(fixed, &decode, to_root)) == 0 {
            return Ok(Some(self.best.clone()));
        }
        let next_x = |s: &mut Self| -> Result<Vec<bool>> {
            let (t, s_t) = (s.taus[depth], s.taus[depth + 1]);
            reverse_step(x, &p, t, s_t, &s.schedule, s.run.posterior, &mut s.rng)
        };
        let last = depth + 1 >= self.run.depth();
        let mut seen: Option<PartialAssignment> = None;
        for &th in &self.run.thresholds {
            let mut partial = PartialAssignment::empty(f.num_vars());
            for (v, &pt) in p.iter().enumerate() {
                if pt.max(1.0 - pt) > th {
                    partial.set(v, pt >= 0.5);
                }
            }
            if partial.assigned_count() == 0 || seen.as_ref() == Some(&partial) {
                continue;
            }
            seen = Some(partial.clone());
            let out = unit_propagate(f, &partial);
            let mut fixed2 = fixed.to_vec();
            for (v, val) in out.extended.0.iter().enumerate() {
                if let Some(b) = val {
                    fixed2[to_root[v]] = Some(*b);
                }
            }
            match out.kind {
                PropagationKind::Solved => {
                    let full = self.candidate(&fixed2, &[], &[]);
                    if self.root.gap(&full) == 0 {
                        return Ok(Some(full));
                    }
                }
                PropagationKind::Conflict => {}
                PropagationKind::Simplified if !last => {
                    let (child, back) = compact(&out.residual);
                    let child_root: Vec<usize> = back.iter().map(|&v| to_root[v]).collect();
                    let xn = next_x(self)?;
                    let cx: Vec<bool> = back.iter().map(|&v| xn[v]).collect();
                    if let Some(sol) = self.call(&child, &child_root, &cx, &fixed2, depth + 1)? {
                        return Ok(Some(sol));
                    }
                }
                PropagationKind::Simplified => {}
            }
        }
        if last {
            return Ok(None);
        }
        // every threshold failed: another diffusion step on the same clauses
        let xn = next_x(self)?;
        self.call(f, to_root, &xn, fixed, depth + 1)
    }
}

/// Diffusion sampling interleaved with unit propagation on thresholded
/// partial assignments, searched recursively (one diffusion step per call).
pub fn up_guided_solve<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    f: &CnfFormula,
    run: &DiffusionRun,
    seed: u64,
) -> Result<UpResult> {
    run.validate()?;
    let schedule = run.schedule.build()?;
    let taus = schedule.inference_timesteps(run.diffusion_steps)?;
    let n = f.num_vars();
    let x = random_values(n, rng::derive(seed, &[0]));
    let mut search = UpSearch {
        model,
        root: f,
        run,
        schedule,
        taus,
        rng: rng::rng_at(seed, &[2]),
        seed,
        calls: 0,
        best_gap: usize::MAX,
        best: vec![false; n],
        gaps: Vec::new(),
        fill: x.clone(),
    };
    let identity: Vec<usize> = (0..n).collect();
    let found = search.call(f, &identity, &x, &vec![None; n], 0)?;
    let (gap, assignment) = match found {
        Some(a) => (0, a),
        None => (search.best_gap, search.best.clone()),
    };
    debug_assert!(gap > 0 || f.gap(&assignment) == 0);
    let best_iter = search.gaps.iter().position(|&g| g == gap).map_or(0, |p| p + 1);
    Ok(UpResult {
        calls: search.calls,
        result: SolveResult {
            status: if gap == 0 {
                SolveStatus::SatFound
            } else {
                SolveStatus::NoWitness
            },
            assignment: Assignment(assignment),
            best_gap: gap,
            best_iter,
            steps_used: search.calls,
            gap_trajectory: search.gaps,
        },
    })
}

/// Summary in the layout of the recursive-call cost table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpReport {
    pub instances: usize,
    pub diffusion_accuracy: f64,
    pub up_accuracy: f64,
    pub total_calls: f64,
    pub solved_calls: Option<f64>,
    pub unsolved_calls: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpRecord {
    pub id: String,
    pub sat: Option<bool>,
    pub diffusion_gap: usize,
    pub up_gap: usize,
    pub calls: usize,
}

/// Paired plain-diffusion vs UP-guided comparison. Decision accuracy
/// counts an instance correct when the verdict (SAT iff a zero-gap
/// assignment was found) matches its label.
pub fn up_report<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    instances: &[LabeledInstance],
    run: &DiffusionRun,
    seed: u64,
) -> Result<(UpReport, Vec<UpRecord>)> {
    run.validate()?;
    let seeds = crate::infer::instance_seeds(seed, instances.len());
    let fs: Vec<&CnfFormula> = instances.iter().map(|i| &i.formula).collect();
    let plain = diffusion_solve_batch(model, &fs, run, &seeds)?;
    let mut records = Vec::with_capacity(instances.len());
    for ((inst, &s), d) in instances.iter().zip(&seeds).zip(&plain) {
        let up = up_guided_solve(model, &inst.formula, run, s)?;
        records.push(UpRecord {
            id: inst.id.clone(),
            sat: Some(inst.sat),
            diffusion_gap: d.best_gap,
            up_gap: up.result.best_gap,
            calls: up.calls,
        });
    }
    let n = records.len().max(1) as f64;
    let correct = |gap: usize, sat: Option<bool>| sat == Some(gap == 0);
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let report = UpReport {
        instances: records.len(),
        diffusion_accuracy: records.iter().filter(|r| correct(r.diffusion_gap, r.sat)).count() as f64 / n,
        up_accuracy: records.iter().filter(|r| correct(r.up_gap, r.sat)).count() as f64 / n,
        total_calls: records.iter().map(|r| r.calls as f64).sum::<f64>() / n,
        solved_calls: mean(
            records
                .iter()
                .filter(|r| r.up_gap == 0)
                .map(|r| r.calls as f64)
                .collect(),
        ),
        unsolved_calls: mean(
            records
                .iter()
                .filter(|r| r.up_gap > 0)
                .map(|r| r.calls as f64)
                .collect(),
        ),
    };
    Ok((report, records))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub eta_min: f64,
    pub ema_beta: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            model: ModelConfig::default(),
            schedule: ScheduleConfig::default(),
            epochs: 10,
            batch_size: 64,
            lr: DEFAULT_LR,
            eta_min: DEFAULT_ETA_MIN,
            ema_beta: DEFAULT_EMA_BETA,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

pub struct DenoiserOutcome {
    /// EMA weights after the last epoch.
    pub model: Model<f32>,
    pub last: Model<f32>,
    pub log: Vec<DenoiserEpoch>,
}

/// Satisfiable instances with their witnesses; errors on a missing one.
fn witnessed(ds: &Dataset) -> Result<Vec<(&CnfFormula, &[bool])>> {
    ds.instances
        .iter()
        .filter(|i| i.sat)
        .map(|i| match &i.witness {
            Some(w) => Ok((&i.formula, w.values())),
            None => Err(Error::MissingWitness(i.id.clone())),
        })
        .collect()
}

/// Train the model to recover a witness `x0` from its corruption `x_t` at a
/// uniformly drawn timestep; the timestep itself is not an input.
pub fn train_denoiser(config: &DenoiserConfig, train_set: &Dataset) -> Result<DenoiserOutcome> {
    let model = Model::new(config.model.clone(), rng::derive(config.seed, &[0]))?;
    train_denoiser_from(model, config, train_set)
}

pub fn train_denoiser_from(
    mut model: Model<f32>,
    config: &DenoiserConfig,
    train_set: &Dataset,
) -> Result<DenoiserOutcome> {
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    let schedule = config.schedule.build()?;
    let data = witnessed(train_set)?;
    if data.is_empty() {
        return Err(Error::Dataset("no satisfiable instances to train on".into()));
    }
    model.params.set_trainable(SAT_HEAD_PREFIX, false);
    model.params.adam.clip_norm = config.clip_norm;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.lr, config.eta_min);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::rng_at(config.seed, &[3, epoch as u64]));
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let l = denoiser_batch(&mut model, config, &schedule, &data, chunk, epoch, lr)?;
            total += l * chunk.len() as f64;
        }
        let loss = total / order.len() as f64;
        log::info!("denoiser epoch {epoch} loss {loss:.5} lr {lr:.2e}");
        log.push(DenoiserEpoch { epoch, loss, lr });
    }
    Ok(DenoiserOutcome {
        model: model.ema(),
        last: model,
        log,
    })
}

/// Corrupted input for instance `i` at `epoch`: (timestep, x_t).
fn corrupted(
    config: &DenoiserConfig,
    schedule: &NoiseSchedule,
    x0: &[bool],
    epoch: usize,
    i: usize,
) -> Result<(usize, Vec<bool>)> {
    let mut r = rng::rng_at(config.seed, &[5, epoch as u64, i as u64]);
    let t = r.random_range(1..=schedule.steps());
    Ok((t, forward_corrupt(x0, t, schedule, r.random())?))
}

fn denoiser_batch(
    model: &mut Model<f32>,
    config: &DenoiserConfig,
    schedule: &NoiseSchedule,
    data: &[(&CnfFormula, &[bool])],
    idx: &[usize],
    epoch: usize,
    lr: f64,
) -> Result<f64> {
    let fs: Vec<&CnfFormula> = idx.iter().map(|&i| data[i].0).collect();
    let batch = Batch::from_formulas(config.model.graph_kind, &fs);
    let mut xt = Vec::with_capacity(batch.num_vars);
    let mut target = Vec::with_capacity(batch.num_vars);
    for &i in idx {
        xt.extend(corrupted(config, schedule, data[i].1, epoch, i)?.1);
        target.extend_from_slice(data[i].1);
    }
    let seeds: Vec<u64> = idx
        .iter()
        .map(|&i| rng::derive(config.seed, &[1, epoch as u64, i as u64]))
        .collect();
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let s = model.embed_values(&mut tape, &p, &batch, &xt, &seeds)?;
    let s = model.run(&mut tape, &p, &batch, s, config.model.t_train)?;
    let logits = model.readout(&mut tape, &p, &batch, s.h_left)?;
    let l = loss::assignment(&mut tape, logits, &target, AssignmentLoss::Ce)?;
    let value = tape.value(l).item() as f64;
    if !value.is_finite() {
        return Err(Error::invalid(format!("non-finite denoiser loss at epoch {epoch}")));
    }
    tape.backward(l, &mut model.params)?;
    model.params.adam_step(lr)?;
    model.params.ema_update(config.ema_beta);
    Ok(value)
}

/// Per-variable accuracy of the x0 prediction from corruptions at `t`.
pub fn denoiser_accuracy<T: crate::autodiff::Scalar>(
    model: &Model<T>,
    data: &Dataset,
    schedule: &NoiseSchedule,
    t: usize,
    seed: u64,
) -> Result<f64> {
    let items = witnessed(data)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (c, chunk) in items.chunks(EVAL_CHUNK).enumerate() {
        let fs: Vec<&CnfFormula> = chunk.iter().map(|d| d.0).collect();
        let batch = Batch::from_formulas(model.config().graph_kind, &fs);
        let mut xt = Vec::new();
        let mut seeds = Vec::new();
        for (k, (_, x0)) in chunk.iter().enumerate() {
            let s = rng::derive(seed, &[c as u64, k as u64]);
            xt.extend(forward_corrupt(x0, t, schedule, s)?);
            seeds.push(rng::derive(s, &[1]));
        }
        let p = denoise(model, &batch, &xt, &seeds, model.config().t_train)?;
        let target: Vec<bool> = chunk.iter().flat_map(|d| d.1.iter().copied()).collect();
        hit += hard(&p).iter().zip(&target).filter(|(a, b)| a == b).count();
        total += target.len();
    }
    if total == 0 {
        return Err(Error::Dataset("no satisfiable instances to score".into()));
    }
    Ok(hit as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_closed_form() {
        let s = build_schedule(50, 0.02, 0.35).unwrap();
        for (a, b) in s.q_bar(1).iter().flatten().zip(s.q(1).iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
        let uniform = 0.5 - s.flip_prob(50);
        assert!(uniform.abs() < 0.01);
        assert!(build_schedule(3, 0.5, 0.5).is_err());
        assert!(build_schedule(3, 0.2, 0.1).is_err());
    }

    #[test]
    fn inference_timesteps_descend_to_zero() {
        let s = build_schedule(50, 0.02, 0.35).unwrap();
        let t = s.inference_timesteps(10).unwrap();
        assert_eq!(t.first(), Some(&50));
        assert_eq!(t.last(), Some(&0));
        assert!(t.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(s.inference_timesteps(1).unwrap(), vec![50, 0]);
        assert!(s.inference_timesteps(51).is_err());
    }

    #[test]
    fn posterior_rows_sum_to_one() {
        let s = build_schedule(4, 0.05, 0.3).unwrap();
        for t in 1..=4 {
            for xt in [false, true] {
                for p in [0.0, 0.3, 1.0] {
                    let p1 = posterior_probs(&[xt], &[p], t, &s).unwrap()[0];
                    assert!((0.0..=1.0).contains(&p1));
                }
            }
        }
        // at t = 1 the posterior is the x0 prediction itself
        let p1 = posterior_probs(&[false], &[0.8], 1, &s).unwrap()[0];
        assert!((p1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn compaction_renumbers() {
        let f = CnfFormula::from_dimacs_clauses(5, &[&[4, -2], &[2, 5]]).unwrap();
        let (c, back) = compact(&f);
        assert_eq!(back, vec![3, 1, 4]);
        assert_eq!(c.num_vars(), 3);
        assert_eq!(c.gap(&[true, false, true]), 0);
    }

    #[test]
    fn run_validation() {
        assert!(DiffusionRun::default().validate().is_ok());
        let bad = DiffusionRun {
            thresholds: vec![0.9, 0.6],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
