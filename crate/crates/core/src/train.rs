//! Training loops: loss selection, optional size curriculum, EMA-validated
//! model selection and a per-epoch metrics log.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{lr_schedule, Checkpoint, Tape, DEFAULT_EMA_BETA, DEFAULT_ETA_MIN, DEFAULT_LR};
use crate::cnf::CnfFormula;
use crate::error::{Error, Result};
use crate::generate::{Dataset, LabeledInstance};
use crate::graph::Batch;
use crate::infer::{self, DecisionMode, EvalItem, SolveOptions};
use crate::logic::{maxsat_optimum_with, MaxSatOptions};
use crate::model::{loss, AssignmentLoss, Model, ModelConfig, READOUT_PREFIX, SAT_HEAD_PREFIX, VALUE_EMBED_PREFIX};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Satisfiability classification through the SAT head.
    Sat,
    /// Fixed per-instance target assignments.
    Assignment,
    /// Differentiable clause-satisfaction objective, no labels.
    Unsupervised,
    /// Closest optimal assignment to the current prediction.
    Closest,
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sat" => Ok(LossMode::Sat),
            "assignment" => Ok(LossMode::Assignment),
            "unsupervised" => Ok(LossMode::Unsupervised),
            "closest" => Ok(LossMode::Closest),
            other => Err(Error::invalid(format!("unknown loss mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossMode::Sat => "sat",
            LossMode::Assignment => "assignment",
            LossMode::Unsupervised => "unsupervised",
            LossMode::Closest => "closest",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub start_size: usize,
    pub size_step: usize,
    pub threshold_start: f64,
    pub threshold_end: f64,
    /// Epochs at one size before advancing regardless of accuracy.
    pub max_epochs_per_size: usize,
    /// Sizes in the active pool: the current one and this many before it.
    pub previous_sizes: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            start_size: 5,
            size_step: 2,
            threshold_start: 0.65,
            threshold_end: 0.85,
            max_epochs_per_size: 100,
            previous_sizes: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub size: usize,
    pub max_size: usize,
    pub epochs_at_size: usize,
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size_step == 0 || self.start_size == 0 || self.max_epochs_per_size == 0 {
            return Err(Error::invalid("curriculum sizes, step and epoch cap must be positive"));
        }
        if !(0.0..=1.0).contains(&self.threshold_start) || !(0.0..=1.0).contains(&self.threshold_end) {
            return Err(Error::invalid("curriculum thresholds must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn start(&self, max_size: usize) -> CurriculumState {
        CurriculumState {
            size: self.start_size.min(max_size),
            max_size,
            epochs_at_size: 0,
        }
    }

    fn num_sizes(&self, max_size: usize) -> usize {
        if max_size <= self.start_size {
            1
        } else {
            (max_size - self.start_size).div_ceil(self.size_step) + 1
        }
    }

    /// Accuracy needed to leave `state.size`, linear in the size index.
    pub fn threshold(&self, state: &CurriculumState) -> f64 {
        let count = self.num_sizes(state.max_size);
        if count <= 1 {
            return self.threshold_start;
        }
        let idx = state
            .size
            .saturating_sub(self.start_size)
            .div_ceil(self.size_step)
            .min(count - 1);
        self.threshold_start + (self.threshold_end - self.threshold_start) * idx as f64 / (count - 1) as f64
    }

    /// Record one finished epoch with its validation accuracy (if measured).
    pub fn step(&self, state: CurriculumState, val_acc: Option<f64>) -> CurriculumState {
        let mut s = state;
        s.epochs_at_size += 1;
        if s.size >= s.max_size {
            return s;
        }
        let passed = val_acc.is_some_and(|a| a >= self.threshold(&state));
        if passed || s.epochs_at_size >= self.max_epochs_per_size {
            s.size = (s.size + self.size_step).min(s.max_size);
            s.epochs_at_size = 0;
        }
        s
    }

    /// Inclusive variable-count range of the training pool.
    pub fn pool_range(&self, state: &CurriculumState) -> (usize, usize) {
        let span = self.size_step * self.previous_sizes;
        (state.size.saturating_sub(span).max(1), state.size)
    }

    /// Inclusive variable-count range of the validation bucket.
    pub fn bucket_range(&self, state: &CurriculumState) -> (usize, usize) {
        (state.size.saturating_sub(self.size_step - 1).max(1), state.size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossMode,
    pub assignment_loss: AssignmentLoss,
    /// Drop unsatisfiable instances from the training and validation sets.
    pub sat_only: bool,
    pub curriculum: Option<CurriculumConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub eta_min: f64,
    pub ema_beta: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Validate every this many epochs (and after the last one).
    pub eval_every: usize,
    /// Message-passing rounds at validation time.
    pub eval_iters: usize,
    /// Also validate the raw weights (logged next to the EMA weights).
    pub eval_raw: bool,
    /// Largest variable count accepted in closest mode.
    pub closest_max_vars: usize,
    /// Fraction of closest-mode batches whose targets are re-verified by
    /// enumeration (instances with at most 12 variables).
    pub oracle_check_rate: f64,
    pub oracle_budget: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: LossMode::Assignment,
            assignment_loss: AssignmentLoss::Ce,
            sat_only: false,
            curriculum: None,
            epochs: 10,
            batch_size: 64,
            lr: DEFAULT_LR,
            eta_min: DEFAULT_ETA_MIN,
            ema_beta: DEFAULT_EMA_BETA,
            clip_norm: Some(1.0),
            seed: 0,
            eval_every: 1,
            eval_iters: 100,
            eval_raw: true,
            closest_max_vars: 40,
            oracle_check_rate: 0.01,
            oracle_budget: MaxSatOptions::default().node_budget,
        }
    }
}

/// Largest instance the enumeration spot check will expand.
pub const ORACLE_CHECK_MAX_VARS: usize = 12;

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 || self.eval_iters == 0 {
            return Err(Error::invalid(
                "epochs, batch size, eval cadence and eval iterations must be positive",
            ));
        }
        if !(self.lr > 0.0) || !(self.eta_min >= 0.0) || !(0.0..1.0).contains(&self.ema_beta) {
            return Err(Error::invalid("bad learning rate or EMA decay"));
        }
        if !(0.0..=1.0).contains(&self.oracle_check_rate) {
            return Err(Error::invalid("oracle check rate must lie in [0, 1]"));
        }
        if let Some(c) = &self.curriculum {
            c.validate()?;
        }
        Ok(())
    }

    fn maxsat_opts(&self) -> MaxSatOptions {
        MaxSatOptions {
            node_budget: self.oracle_budget,
        }
    }

    /// Validation metric used for the curriculum and model selection.
    pub fn decision_mode(&self) -> DecisionMode {
        match self.loss {
            LossMode::Sat => DecisionMode::Classifier,
            _ => DecisionMode::Assignment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub size: Option<usize>,
    pub instances: usize,
    pub loss: f64,
    pub lr: f64,
    /// Decision accuracy (sat mode) or SAT accuracy (assignment modes).
    pub val_ema: Option<f64>,
    pub val_raw: Option<f64>,
    pub val_ema_gap: Option<f64>,
    pub val_raw_gap: Option<f64>,
    pub oracle_checks: usize,
}

pub struct TrainOutcome {
    /// EMA weights of the best validated epoch.
    pub best: Model<f32>,
    pub best_epoch: Option<usize>,
    pub best_metric: Option<f64>,
    /// Final raw weights with optimizer and EMA state.
    pub last: Model<f32>,
    pub log: Vec<EpochLog>,
}

/// Per-instance supervision targets for the assignment loss: the witness
/// for satisfiable instances, an optimal MaxSAT assignment otherwise.
pub fn assignment_targets(instances: &[LabeledInstance], opts: MaxSatOptions) -> Result<Vec<Vec<bool>>> {
    instances
        .iter()
        .map(|inst| match (&inst.witness, inst.sat) {
            (Some(w), _) => Ok(w.0.clone()),
            (None, true) => Err(Error::MissingWitness(inst.id.clone())),
            (None, false) => Ok(maxsat_optimum_with(&inst.formula, opts)?.witness.0),
        })
        .collect()
}

/// True when `target` has the minimum gap and, among minimum-gap
/// assignments, the minimum Hamming distance to the rounded reference.
pub fn verify_closest_by_enumeration(f: &CnfFormula, p_true: &[f64], target: &[bool]) -> bool {
    let n = f.num_vars();
    let reference: Vec<bool> = p_true.iter().map(|&p| p >= 0.5).collect();
    let mut best = (usize::MAX, usize::MAX);
    let mut values = vec![false; n];
    for bits in 0u64..(1u64 << n) {
        for (i, v) in values.iter_mut().enumerate() {
            *v = bits >> i & 1 == 1;
        }
        let ham = values.iter().zip(&reference).filter(|(a, b)| a != b).count();
        best = best.min((f.gap(&values), ham));
    }
    let ham = target.iter().zip(&reference).filter(|(a, b)| a != b).count();
    (f.gap(target), ham) == best
}

fn items_of(instances: &[LabeledInstance]) -> Vec<EvalItem<'_>> {
    instances
        .iter()
        .map(|i| EvalItem {
            id: &i.id,
            formula: &i.formula,
            sat: Some(i.sat),
        })
        .collect()
}

/// Validation score and average gap.
fn validate(model: &Model<f32>, config: &TrainConfig, items: &[EvalItem], seed: u64) -> Result<Option<(f64, f64)>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mode = config.decision_mode();
    let records = match mode {
        DecisionMode::Classifier => infer::evaluate_classifier(model, items, config.eval_iters, seed)?,
        DecisionMode::Assignment => {
            let opts = SolveOptions {
                max_iters: config.eval_iters,
                early_stop: true,
            };
            infer::evaluate(model, items, opts, 1, seed)?
        }
    };
    let m = infer::aggregate(&records, mode);
    let score = match mode {
        DecisionMode::Classifier => m.decision_accuracy,
        DecisionMode::Assignment => m.sat_accuracy,
    };
    Ok(score.map(|s| (s, m.avg_gap)))
}

/// Freeze the heads the chosen loss does not reach.
pub fn freeze_unused(model: &mut Model<f32>, mode: LossMode) {
    let p = &mut model.params;
    p.set_trainable(VALUE_EMBED_PREFIX, false);
    match mode {
        LossMode::Sat => p.set_trainable(READOUT_PREFIX, false),
        _ => p.set_trainable(SAT_HEAD_PREFIX, false),
    }
}

/// Run one optimisation step on `batch_idx` (indices into `instances`).
#[allow(clippy::too_many_arguments)]
fn train_batch(
    model: &mut Model<f32>,
    config: &TrainConfig,
    instances: &[LabeledInstance],
    targets: &[Vec<bool>],
    batch_idx: &[usize],
    epoch: usize,
    lr: f64,
    check_oracle: bool,
) -> Result<(f64, usize)> {
    let fs: Vec<&CnfFormula> = batch_idx.iter().map(|&i| &instances[i].formula).collect();
    let batch = Batch::from_formulas(config.model.graph_kind, &fs);
    let seeds: Vec<u64> = batch_idx
        .iter()
        .map(|&i| rng::derive(config.seed, &[1, epoch as u64, i as u64]))
        .collect();
    let mut tape = Tape::new();
    let p = model.bind(&mut tape);
    let s = model.init_state(&batch, &seeds).bind(&mut tape);
    let s = model.run(&mut tape, &p, &batch, s, config.model.t_train)?;
    let mut checks = 0;
    let l = match config.loss {
        LossMode::Sat => {
            let probs = model.sat_probability(&mut tape, &p, &batch, s)?;
            let labels: Vec<bool> = batch_idx.iter().map(|&i| instances[i].sat).collect();
            loss::sat_bce(&mut tape, probs, &labels)?
        }
        LossMode::Assignment => {
            let logits = model.readout(&mut tape, &p, &batch, s.h_left)?;
            let target: Vec<bool> = batch_idx.iter().flat_map(|&i| targets[i].iter().copied()).collect();
            loss::assignment(&mut tape, logits, &target, config.assignment_loss)?
        }
        LossMode::Unsupervised => {
            let logits = model.readout(&mut tape, &p, &batch, s.h_left)?;
            loss::unsupervised(&mut tape, logits, &batch)?
        }
        LossMode::Closest => {
            let logits = model.readout(&mut tape, &p, &batch, s.h_left)?;
            let (l, target) = loss::closest(&mut tape, logits, &batch, &fs, config.maxsat_opts())?;
            if check_oracle {
                let z = tape.value(logits);
                for (k, f) in fs.iter().enumerate() {
                    if f.num_vars() > ORACLE_CHECK_MAX_VARS {
                        continue;
                    }
                    let r = batch.vars_of(k);
                    let p_true: Vec<f64> = r
                        .clone()
                        .map(|v| 1.0 / (1.0 + (z.get(v, 0) - z.get(v, 1)).exp() as f64))
                        .collect();
                    if !verify_closest_by_enumeration(f, &p_true, &target[r]) {
                        return Err(Error::Dataset(format!(
                            "closest target for {} is not optimal",
                            instances[batch_idx[k]].id
                        )));
                    }
                    checks += 1;
                }
            }
            l
        }
    };
    let value = tape.value(l).item() as f64;
    if !value.is_finite() {
        return Err(Error::invalid(format!("non-finite loss {value} at epoch {epoch}")));
    }
    tape.backward(l, &mut model.params)?;
    log::trace!(
        "epoch {epoch} batch loss {value:.5} grad norm {:.4}",
        model.params.grad_norm()
    );
    model.params.adam_step(lr)?;
    model.params.ema_update(config.ema_beta);
    Ok((value, checks))
}

fn filter_sat_only(instances: &[LabeledInstance], sat_only: bool) -> Vec<LabeledInstance> {
    instances.iter().filter(|i| i.sat || !sat_only).cloned().collect()
}

/// Train a fresh model on `train_set`, validating on `val_set`.
pub fn train(config: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    let model = Model::new(config.model.clone(), rng::derive(config.seed, &[0]))?;
    train_from(model, config, train_set, val_set)
}

/// Continue training `model` (its config must match `config.model`).
pub fn train_from(
    mut model: Model<f32>,
    config: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<TrainOutcome> {
    config.validate()?;
    if model.config() != &config.model {
        return Err(Error::invalid("model config differs from the training config"));
    }
    let instances = filter_sat_only(&train_set.instances, config.sat_only);
    let val = filter_sat_only(&val_set.instances, config.sat_only);
    if instances.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let max_n = instances.iter().map(|i| i.formula.num_vars()).max().expect("non-empty");
    if config.loss == LossMode::Closest && max_n > config.closest_max_vars {
        return Err(Error::invalid(format!(
            "closest mode needs instances with at most {} variables, found {max_n}",
            config.closest_max_vars
        )));
    }
    let targets = if config.loss == LossMode::Assignment {
        assignment_targets(&instances, config.maxsat_opts())?
    } else {
        Vec::new()
    };
    freeze_unused(&mut model, config.loss);
    model.params.adam.clip_norm = config.clip_norm;

    let val_seed = rng::derive(config.seed, &[2]);
    let mut curriculum = config.curriculum.as_ref().map(|c| c.start(max_n));
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Model<f32>)> = None;
    for epoch in 0..config.epochs {
        let lr = lr_schedule(epoch, config.epochs, config.lr, config.eta_min);
        let in_range = |i: &LabeledInstance, (lo, hi): (usize, usize)| (lo..=hi).contains(&i.formula.num_vars());
        let pool_range = match (&config.curriculum, &curriculum) {
            (Some(c), Some(s)) => Some(c.pool_range(s)),
            _ => None,
        };
        let mut order: Vec<usize> = (0..instances.len())
            .filter(|&i| pool_range.is_none_or(|r| in_range(&instances[i], r)))
            .collect();
        order.shuffle(&mut rng::rng_at(config.seed, &[3, epoch as u64]));
        let mut check_rng = rng::rng_at(config.seed, &[4, epoch as u64]);
        let mut total = 0.0;
        let mut checks = 0;
        for chunk in order.chunks(config.batch_size) {
            let check =
                config.loss == LossMode::Closest && rand::Rng::random_bool(&mut check_rng, config.oracle_check_rate);
            let (l, c) = train_batch(&mut model, config, &instances, &targets, chunk, epoch, lr, check)?;
            total += l * chunk.len() as f64;
            checks += c;
        }
        let loss = if order.is_empty() {
            0.0
        } else {
            total / order.len() as f64
        };

        let last = epoch + 1 == config.epochs;
        let due = (epoch + 1) % config.eval_every == 0 || last || curriculum.is_some();
        let (mut val_ema, mut val_raw) = (None, None);
        if due {
            let bucket: Vec<LabeledInstance> = match (&config.curriculum, &curriculum) {
                (Some(c), Some(s)) if s.size < s.max_size => {
                    val.iter().filter(|i| in_range(i, c.bucket_range(s))).cloned().collect()
                }
                _ => val.clone(),
            };
            let items = items_of(&bucket);
            val_ema = validate(&model.ema(), config, &items, val_seed)?;
            if config.eval_raw {
                val_raw = validate(&model, config, &items, val_seed)?;
            }
        }
        let size = curriculum.map(|s| s.size);
        log::info!(
            "epoch {epoch} size {size:?} loss {loss:.5} lr {lr:.2e} val_ema {:?} val_raw {:?}",
            val_ema.map(|v| v.0),
            val_raw.map(|v| v.0)
        );
        log.push(EpochLog {
            epoch,
            size,
            instances: order.len(),
            loss,
            lr,
            val_ema: val_ema.map(|v| v.0),
            val_raw: val_raw.map(|v| v.0),
            val_ema_gap: val_ema.map(|v| v.1),
            val_raw_gap: val_raw.map(|v| v.1),
            oracle_checks: checks,
        });
        // model selection only on the full validation set
        let at_full_size = curriculum.is_none_or(|s| s.size >= s.max_size);
        if let (Some((score, _)), true) = (val_ema, at_full_size) {
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, epoch, model.ema()));
            }
        }
        if let (Some(c), Some(s)) = (&config.curriculum, curriculum) {
            curriculum = Some(c.step(s, val_ema.map(|v| v.0)));
        }
    }
    let (best_metric, best_epoch, best_model) = match best {
        Some((s, e, m)) => (Some(s), Some(e), m),
        None => (None, None, model.ema()),
    };
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        best_metric,
        last: model,
        log,
    })
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    infer::write_csv(path, log)
}

/// Save a model (parameters, EMA shadow, optimizer state, config hash).
pub fn save_model(model: &Model<f32>, path: &Path) -> Result<()> {
    Checkpoint::capture(&model.params, model.config())?.save(path)
}

/// Load a model saved by [`save_model`]; the stored config is verified
/// against its hash before the parameters are restored.
pub fn load_model(path: &Path) -> Result<Model<f32>> {
    let ck = Checkpoint::load(path)?;
    let config: ModelConfig = serde_json::from_value(ck.config.clone())?;
    ck.check_config(&config)?;
    let mut model = Model::new(config, 0)?;
    ck.restore_into(&mut model.params)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curriculum_advances_on_threshold() {
        let c = CurriculumConfig::default();
        let s = c.start(21);
        assert_eq!(s.size, 5);
        assert!((c.threshold(&s) - 0.65).abs() < 1e-12);
        let s = c.step(s, Some(0.70));
        assert_eq!(s.size, 7);
        let s = c.step(s, Some(0.60));
        assert_eq!((s.size, s.epochs_at_size), (7, 1));
    }

    #[test]
    fn curriculum_forced_advance() {
        let c = CurriculumConfig::default();
        let mut s = c.start(21);
        for _ in 0..99 {
            s = c.step(s, Some(0.5));
            assert_eq!(s.size, 5);
        }
        s = c.step(s, Some(0.5));
        assert_eq!(s.size, 7);
    }

    #[test]
    fn curriculum_thresholds_and_pool() {
        let c = CurriculumConfig::default();
        let mut s = c.start(13);
        let mut ts = vec![c.threshold(&s)];
        while s.size < 13 {
            s = c.step(s, Some(1.0));
            ts.push(c.threshold(&s));
        }
        let expected = [0.65, 0.70, 0.75, 0.80, 0.85];
        assert_eq!(ts.len(), 5);
        for (t, e) in ts.iter().zip(expected) {
            assert!((t - e).abs() < 1e-12);
        }
        let (lo, hi) = c.pool_range(&s);
        let sizes: Vec<usize> = (lo..=hi).filter(|n| n % 2 == 1).collect();
        assert_eq!(sizes, vec![5, 7, 9, 11, 13]);
        assert_eq!(c.bucket_range(&s), (12, 13));
        // capped at the maximum size
        assert_eq!(c.step(s, Some(1.0)).size, 13);
    }

    #[test]
    fn enumeration_check() {
        let f = CnfFormula::from_dimacs_clauses(2, &[&[1, 2], &[-1, -2]]).unwrap();
        assert!(verify_closest_by_enumeration(&f, &[0.9, 0.2], &[true, false]));
        assert!(!verify_closest_by_enumeration(&f, &[0.9, 0.2], &[false, true]));
    }
}
