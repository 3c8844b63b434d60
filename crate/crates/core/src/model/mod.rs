//! Recurrent message-passing model over VCG or LCG batches.

pub mod loss;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Scalar, Tape, Tensor, Var, L2_EPS};
use crate::error::{Error, Result};
use crate::graph::{Batch, GraphKind};
use crate::rng;

pub use loss::AssignmentLoss;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    #[serde(rename = "RNN")]
    Rnn,
    #[serde(rename = "LSTM")]
    Lstm,
}

impl std::str::FromStr for Cell {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RNN" => Ok(Cell::Rnn),
            "LSTM" => Ok(Cell::Lstm),
            other => Err(Error::invalid(format!("unknown cell {other:?}"))),
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Cell::Rnn => "RNN",
            Cell::Lstm => "LSTM",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub graph_kind: GraphKind,
    pub cell: Cell,
    pub d_model: usize,
    /// Hidden layer widths of every message / head MLP.
    pub mlp_hidden: Vec<usize>,
    /// Message-passing rounds during training.
    pub t_train: usize,
    /// Put an MLP on LCG messages instead of raw embedding sums.
    pub lcg_message_mlp: bool,
}

impl ModelConfig {
    pub fn new(graph_kind: GraphKind, cell: Cell, d_model: usize) -> Self {
        ModelConfig {
            graph_kind,
            cell,
            d_model,
            mlp_hidden: vec![d_model],
            t_train: 25,
            lcg_message_mlp: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model < 2 {
            return Err(Error::invalid("d_model must be at least 2"));
        }
        if self.t_train == 0 {
            return Err(Error::invalid("t_train must be at least 1"));
        }
        if self.mlp_hidden.contains(&0) {
            return Err(Error::invalid("MLP hidden widths must be positive"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::new(GraphKind::Vcg, Cell::Rnn, 64)
    }
}

/// Hidden (and LSTM cell) states for every left and clause row of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct MpState<T> {
    pub h_left: Tensor<T>,
    pub h_clause: Tensor<T>,
    pub c_left: Option<Tensor<T>>,
    pub c_clause: Option<Tensor<T>>,
}

/// The same state bound onto a tape.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h_left: Var,
    pub h_clause: Var,
    pub c_left: Option<Var>,
    pub c_clause: Option<Var>,
}

impl<T: Scalar> MpState<T> {
    pub fn bind(&self, tape: &mut Tape<T>) -> StateVars {
        StateVars {
            h_left: tape.constant(self.h_left.clone()),
            h_clause: tape.constant(self.h_clause.clone()),
            c_left: self.c_left.as_ref().map(|c| tape.constant(c.clone())),
            c_clause: self.c_clause.as_ref().map(|c| tape.constant(c.clone())),
        }
    }

    pub fn read(tape: &Tape<T>, s: StateVars) -> Self {
        MpState {
            h_left: tape.value(s.h_left).clone(),
            h_clause: tape.value(s.h_clause).clone(),
            c_left: s.c_left.map(|c| tape.value(c).clone()),
            c_clause: s.c_clause.map(|c| tape.value(c).clone()),
        }
    }

    /// Variable embeddings (positive literals for LCG).
    pub fn variable_rows(&self, batch: &Batch) -> Tensor<T> {
        self.h_left.select_rows(&batch.var_rows)
    }
}

/// Per-variable class scores for a batch. Class 1 is `true`.
#[derive(Clone, Debug)]
pub struct Prediction<T> {
    pub logits: Tensor<T>,
    pub probs: Tensor<T>,
    pub hard: Vec<bool>,
}

impl<T: Scalar> Prediction<T> {
    pub fn from_logits(logits: Tensor<T>) -> Self {
        let mut probs = logits.clone();
        for r in 0..probs.rows() {
            crate::autodiff::softmax_in_place(probs.row_mut(r));
        }
        let hard = (0..probs.rows()).map(|r| probs.get(r, 1) >= probs.get(r, 0)).collect();
        Prediction { logits, probs, hard }
    }

    /// `P(true)` for every variable, in `f64`.
    pub fn p_true(&self) -> Vec<f64> {
        (0..self.probs.rows()).map(|r| self.probs.get(r, 1).f64()).collect()
    }

    /// Maximum class probability per variable.
    pub fn confidence(&self) -> Vec<f64> {
        (0..self.probs.rows())
            .map(|r| self.probs.get(r, 0).max(self.probs.get(r, 1)).f64())
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
}

#[derive(Clone, Debug)]
struct CellParams {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct Ids {
    /// VCG: literal-to-clause and clause-to-literal message MLPs by polarity.
    vc: Option<(Mlp, Mlp)>,
    cv: Option<(Mlp, Mlp)>,
    /// LCG with message MLPs enabled.
    lc: Option<(Mlp, Mlp)>,
    clause_cell: CellParams,
    left_cell: CellParams,
    readout_w: ParamId,
    readout_b: ParamId,
    sat_head: Mlp,
    value_embed: ParamId,
}

/// Parameter prefixes of the separate heads, used to freeze unused heads.
pub const SAT_HEAD_PREFIX: &str = "sat_head.";
pub const READOUT_PREFIX: &str = "readout.";
pub const VALUE_EMBED_PREFIX: &str = "value_embed";

/// Tape handles for every parameter, indexed by [`ParamId`].
pub struct Bound(Vec<Var>);

impl Bound {
    fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    rng: &'a mut rng::Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Result<(ParamId, ParamId)> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = self
            .store
            .add(format!("{name}.w"), Tensor::uniform(fan_in, fan_out, bound, self.rng))?;
        let b = self.store.add(format!("{name}.b"), Tensor::zeros(1, fan_out))?;
        Ok((w, b))
    }

    fn mlp(&mut self, name: &str, input: usize, hidden: &[usize], output: usize) -> Result<Mlp> {
        let mut dims = vec![input];
        dims.extend_from_slice(hidden);
        dims.push(output);
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.linear(&format!("{name}.{i}"), w[0], w[1]))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    fn cell(&mut self, name: &str, cell: Cell, input: usize, d: usize) -> Result<CellParams> {
        let width = match cell {
            Cell::Rnn => d,
            Cell::Lstm => 4 * d,
        };
        let bx = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (d as f64).sqrt();
        let wx = self
            .store
            .add(format!("{name}.wx"), Tensor::uniform(input, width, bx, self.rng))?;
        let wh = self
            .store
            .add(format!("{name}.wh"), Tensor::uniform(d, width, bh, self.rng))?;
        let mut bias = Tensor::zeros(1, width);
        if cell == Cell::Lstm {
            // forget gate starts open
            bias.data_mut()[d..2 * d].iter_mut().for_each(|v| *v = T::one());
        }
        let b = self.store.add(format!("{name}.b"), bias)?;
        Ok(CellParams { wx, wh, b })
    }
}

/// Index arrays derived once per batch.
struct Routing {
    edge_left: Arc<[usize]>,
    edge_clause: Arc<[usize]>,
    /// VCG: row of `[pos(h_left); neg(h_left)]` feeding each edge.
    vc_rows: Arc<[usize]>,
    /// VCG: row of `[pos(h_clause); neg(h_clause)]` feeding each edge.
    cv_rows: Arc<[usize]>,
}

impl Routing {
    fn new(batch: &Batch) -> Self {
        let (nl, m) = (batch.num_left, batch.num_clauses);
        let neg = |e: usize| batch.edge_polarity[e] < 0;
        Routing {
            edge_left: batch.edge_left.clone(),
            edge_clause: batch.edge_clause.clone(),
            vc_rows: (0..batch.num_edges())
                .map(|e| batch.edge_left[e] + if neg(e) { nl } else { 0 })
                .collect(),
            cv_rows: (0..batch.num_edges())
                .map(|e| batch.edge_clause[e] + if neg(e) { m } else { 0 })
                .collect(),
        }
    }
}

pub struct Model<T> {
    config: ModelConfig,
    pub params: ParamStore<T>,
    ids: Ids,
}

impl<T: Scalar> Clone for Model<T> {
    fn clone(&self) -> Self {
        Model {
            config: self.config.clone(),
            params: self.params.clone(),
            ids: self.ids.clone(),
        }
    }
}

impl<T: Scalar> Model<T> {
    /// Fresh parameters drawn deterministically from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let hidden = config.mlp_hidden.clone();
        let mut r = rng::rng(seed);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut r,
        };
        let pair = |b: &mut Builder<T>, name: &str| -> Result<(Mlp, Mlp)> {
            Ok((
                b.mlp(&format!("{name}.pos"), d, &hidden, d)?,
                b.mlp(&format!("{name}.neg"), d, &hidden, d)?,
            ))
        };
        let (vc, cv, lc) = match config.graph_kind {
            GraphKind::Vcg => (Some(pair(&mut b, "msg.vc")?), Some(pair(&mut b, "msg.cv")?), None),
            GraphKind::Lcg if config.lcg_message_mlp => {
                let to_clause = b.mlp("msg.lc", d, &hidden, d)?;
                let to_literal = b.mlp("msg.cl", d, &hidden, d)?;
                (None, None, Some((to_clause, to_literal)))
            }
            GraphKind::Lcg => (None, None, None),
        };
        let left_in = match config.graph_kind {
            GraphKind::Vcg => d,
            GraphKind::Lcg => 2 * d,
        };
        let clause_cell = b.cell("cell.clause", config.cell, d, d)?;
        let left_cell = b.cell("cell.left", config.cell, left_in, d)?;
        let (readout_w, readout_b) = b.linear("readout", d, 2)?;
        let sat_head = b.mlp("sat_head", 2 * d, &hidden, 1)?;
        let value_embed = b.store.add(VALUE_EMBED_PREFIX, Tensor::randn(2, d, b.rng))?;
        let ids = Ids {
            vc,
            cv,
            lc,
            clause_cell,
            left_cell,
            readout_w,
            readout_b,
            sat_head,
            value_embed,
        };
        Ok(Model {
            config,
            params: b.store,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Replace the parameters with a store of identical names and shapes.
    pub fn with_params(mut self, store: ParamStore<T>) -> Result<Self> {
        if store.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} parameters given, model has {}",
                store.len(),
                self.params.len()
            )));
        }
        for id in self.params.ids() {
            let name = self.params.name(id);
            let other = store
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name:?}")))?;
            if other != id || store.value(other).shape() != self.params.value(id).shape() {
                return Err(Error::Checkpoint(format!("parameter {name:?} does not match")));
            }
        }
        self.params = store;
        Ok(self)
    }

    /// The same model evaluated with its EMA shadow weights.
    pub fn ema(&self) -> Self {
        Model {
            config: self.config.clone(),
            params: self.params.ema_params(),
            ids: self.ids.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound(self.params.ids().map(|id| tape.param(&self.params, id)).collect())
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.kind != self.config.graph_kind {
            return Err(Error::Shape {
                op: "model",
                detail: format!("{} model given a {} batch", self.config.graph_kind, batch.kind),
            });
        }
        Ok(())
    }

    /// Standard-normal rows, unit-normalized; instance `i` draws from `seeds[i]`.
    pub fn init_state(&self, batch: &Batch, seeds: &[u64]) -> MpState<T> {
        let d = self.config.d_model;
        let mut h_left = Tensor::zeros(batch.num_left, d);
        let mut h_clause = Tensor::zeros(batch.num_clauses, d);
        for (i, &seed) in seeds.iter().enumerate().take(batch.num_instances()) {
            let mut r = rng::rng(seed);
            for (rows, target) in [
                (batch.left_rows_of(i), &mut h_left),
                (batch.clause_rows_of(i), &mut h_clause),
            ] {
                let block = Tensor::<T>::randn(rows.len(), d, &mut r);
                for (k, row) in rows.enumerate() {
                    target.row_mut(row).copy_from_slice(block.row(k));
                }
            }
        }
        normalize_rows(&mut h_left);
        normalize_rows(&mut h_clause);
        self.with_cells(h_left, h_clause)
    }

    fn with_cells(&self, h_left: Tensor<T>, h_clause: Tensor<T>) -> MpState<T> {
        let lstm = self.config.cell == Cell::Lstm;
        MpState {
            c_left: lstm.then(|| Tensor::zeros(h_left.rows(), h_left.cols())),
            c_clause: lstm.then(|| Tensor::zeros(h_clause.rows(), h_clause.cols())),
            h_left,
            h_clause,
        }
    }

    /// Initial state whose variable rows embed the Boolean `values` through
    /// the learned value embedding; clause rows are random as in
    /// [`Model::init_state`]. For LCG the negative literal gets the
    /// complementary value.
    pub fn embed_values(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        batch: &Batch,
        values: &[bool],
        seeds: &[u64],
    ) -> Result<StateVars> {
        self.check_batch(batch)?;
        if values.len() != batch.num_vars {
            return Err(Error::LengthMismatch {
                expected: batch.num_vars,
                got: values.len(),
            });
        }
        let mut rows = vec![0usize; batch.num_left];
        for i in 0..batch.num_instances() {
            let vars = batch.vars_of(i);
            let left = batch.left_rows_of(i);
            let n = vars.len();
            for (k, v) in vars.enumerate() {
                let x = usize::from(values[v]);
                rows[left.start + k] = x;
                if batch.kind == GraphKind::Lcg {
                    rows[left.start + n + k] = 1 - x;
                }
            }
        }
        let emb = tape.gather(p.get(self.ids.value_embed), rows.into())?;
        let h_left = tape.l2_normalize(emb, T::of(L2_EPS));
        let random = self.init_state(batch, seeds);
        let h_clause = tape.constant(random.h_clause);
        let lstm = self.config.cell == Cell::Lstm;
        let d = self.config.d_model;
        Ok(StateVars {
            h_left,
            h_clause,
            c_left: lstm.then(|| tape.constant(Tensor::zeros(batch.num_left, d))),
            c_clause: lstm.then(|| tape.constant(Tensor::zeros(batch.num_clauses, d))),
        })
    }

    fn mlp(&self, tape: &mut Tape<T>, p: &Bound, mlp: &Mlp, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in mlp.layers.iter().enumerate() {
            let z = tape.matmul(h, p.get(w))?;
            h = tape.add_row(z, p.get(b))?;
            if i + 1 < mlp.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }

    fn cell(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        c: &CellParams,
        x: Var,
        h: Var,
        state: Option<Var>,
    ) -> Result<(Var, Option<Var>)> {
        let a = tape.matmul(x, p.get(c.wx))?;
        let r = tape.matmul(h, p.get(c.wh))?;
        let s = tape.add(a, r)?;
        let pre = tape.add_row(s, p.get(c.b))?;
        let eps = T::of(L2_EPS);
        match self.config.cell {
            Cell::Rnn => {
                let h1 = tape.tanh(pre);
                Ok((tape.l2_normalize(h1, eps), None))
            }
            Cell::Lstm => {
                let d = self.config.d_model;
                let gate = |tape: &mut Tape<T>, k: usize| tape.slice_cols(pre, k * d, d);
                let i = gate(tape, 0)?;
                let i = tape.sigmoid(i);
                let f = gate(tape, 1)?;
                let f = tape.sigmoid(f);
                let g = gate(tape, 2)?;
                let g = tape.tanh(g);
                let o = gate(tape, 3)?;
                let o = tape.sigmoid(o);
                let c_prev = state.ok_or_else(|| Error::invalid("LSTM state without a cell state"))?;
                let keep = tape.mul(f, c_prev)?;
                let write = tape.mul(i, g)?;
                let c_new = tape.add(keep, write)?;
                let tc = tape.tanh(c_new);
                let h_new = tape.mul(o, tc)?;
                Ok((tape.l2_normalize(h_new, eps), Some(c_new)))
            }
        }
    }

    fn polarity_messages(
        &self,
        tape: &mut Tape<T>,
        p: &Bound,
        mlps: &(Mlp, Mlp),
        h: Var,
        rows: &Arc<[usize]>,
        seg: &Arc<[usize]>,
        segments: usize,
    ) -> Result<Var> {
        let pos = self.mlp(tape, p, &mlps.0, h)?;
        let neg = self.mlp(tape, p, &mlps.1, h)?;
        let both = tape.concat_rows(&[pos, neg])?;
        let per_edge = tape.gather(both, rows.clone())?;
        tape.segment_sum(per_edge, seg.clone(), segments)
    }

    fn round(&self, tape: &mut Tape<T>, p: &Bound, batch: &Batch, rt: &Routing, s: StateVars) -> Result<StateVars> {
        let (nl, m) = (batch.num_left, batch.num_clauses);
        let ids = &self.ids;
        let to_clause = match (&ids.vc, &ids.lc) {
            (Some(vc), _) => self.polarity_messages(tape, p, vc, s.h_left, &rt.vc_rows, &rt.edge_clause, m)?,
            (None, lc) => {
                let src = match lc {
                    Some((mlp, _)) => self.mlp(tape, p, mlp, s.h_left)?,
                    None => s.h_left,
                };
                let e = tape.gather(src, rt.edge_left.clone())?;
                tape.segment_sum(e, rt.edge_clause.clone(), m)?
            }
        };
        let (h_clause, c_clause) = self.cell(tape, p, &ids.clause_cell, to_clause, s.h_clause, s.c_clause)?;

        let left_input = match (&ids.cv, &ids.lc) {
            (Some(cv), _) => self.polarity_messages(tape, p, cv, h_clause, &rt.cv_rows, &rt.edge_left, nl)?,
            (None, lc) => {
                let src = match lc {
                    Some((_, mlp)) => self.mlp(tape, p, mlp, h_clause)?,
                    None => h_clause,
                };
                let e = tape.gather(src, rt.edge_clause.clone())?;
                let msg = tape.segment_sum(e, rt.edge_left.clone(), nl)?;
                let flip = batch
                    .flip
                    .clone()
                    .ok_or_else(|| Error::invalid("LCG batch without flip pairing"))?;
                let flipped = tape.gather(s.h_left, flip)?;
                tape.concat_cols(&[msg, flipped])?
            }
        };
        let (h_left, c_left) = self.cell(tape, p, &ids.left_cell, left_input, s.h_left, s.c_left)?;
        Ok(StateVars {
            h_left,
            h_clause,
            c_left,
            c_clause,
        })
    }

    /// `steps` rounds of message passing on one tape.
    pub fn run(&self, tape: &mut Tape<T>, p: &Bound, batch: &Batch, s: StateVars, steps: usize) -> Result<StateVars> {
        self.check_batch(batch)?;
        let rt = Routing::new(batch);
        let mut s = s;
        for _ in 0..steps {
            s = self.round(tape, p, batch, &rt, s)?;
        }
        Ok(s)
    }

    /// Linear readout of the variable rows (`num_vars x 2` logits).
    pub fn readout(&self, tape: &mut Tape<T>, p: &Bound, batch: &Batch, h_left: Var) -> Result<Var> {
        let h = match batch.kind {
            GraphKind::Vcg => h_left,
            GraphKind::Lcg => tape.gather(h_left, batch.var_rows.clone())?,
        };
        let z = tape.matmul(h, p.get(self.ids.readout_w))?;
        tape.add_row(z, p.get(self.ids.readout_b))
    }

    /// Per-instance satisfiability probability (`instances x 1`) from mean
    /// pooled left and clause rows.
    pub fn sat_probability(&self, tape: &mut Tape<T>, p: &Bound, batch: &Batch, s: StateVars) -> Result<Var> {
        let b = batch.num_instances();
        let left = tape.segment_mean(s.h_left, batch.left_instance.clone(), b)?;
        let clause = tape.segment_mean(s.h_clause, batch.clause_instance.clone(), b)?;
        let pooled = tape.concat_cols(&[left, clause])?;
        let z = self.mlp(tape, p, &self.ids.sat_head, pooled)?;
        Ok(tape.sigmoid(z))
    }

    /// Run from `state` for up to `steps` rounds, one fresh tape per round.
    /// `visit(iter, state, prediction)` is called after every round
    /// (1-based) and stops the rollout by returning `false`.
    pub fn rollout(
        &self,
        batch: &Batch,
        state: MpState<T>,
        steps: usize,
        mut visit: impl FnMut(usize, &MpState<T>, &Prediction<T>) -> bool,
    ) -> Result<MpState<T>> {
        self.check_batch(batch)?;
        let rt = Routing::new(batch);
        let mut state = state;
        for it in 1..=steps {
            let mut tape = Tape::new();
            let p = self.bind(&mut tape);
            let s = state.bind(&mut tape);
            let s = self.round(&mut tape, &p, batch, &rt, s)?;
            let logits = self.readout(&mut tape, &p, batch, s.h_left)?;
            state = MpState::read(&tape, s);
            let pred = Prediction::from_logits(tape.value(logits).clone());
            if !visit(it, &state, &pred) {
                break;
            }
        }
        Ok(state)
    }

    /// Prediction after `steps` rounds from the seeded initial state.
    pub fn predict(&self, batch: &Batch, seeds: &[u64], steps: usize) -> Result<Prediction<T>> {
        let (pred, _) = self.predict_with_state(batch, self.init_state(batch, seeds), steps)?;
        Ok(pred)
    }

    pub fn predict_with_state(
        &self,
        batch: &Batch,
        state: MpState<T>,
        steps: usize,
    ) -> Result<(Prediction<T>, MpState<T>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let s = state.bind(&mut tape);
        let s = self.run(&mut tape, &p, batch, s, steps)?;
        let logits = self.readout(&mut tape, &p, batch, s.h_left)?;
        Ok((
            Prediction::from_logits(tape.value(logits).clone()),
            MpState::read(&tape, s),
        ))
    }

    /// Satisfiability probability per instance after `steps` rounds.
    pub fn classify(&self, batch: &Batch, seeds: &[u64], steps: usize) -> Result<(Vec<f64>, MpState<T>)> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape);
        let s = self.init_state(batch, seeds).bind(&mut tape);
        let s = self.run(&mut tape, &p, batch, s, steps)?;
        let prob = self.sat_probability(&mut tape, &p, batch, s)?;
        Ok((tape.value(prob).to_f64(), MpState::read(&tape, s)))
    }
}

fn normalize_rows<T: Scalar>(t: &mut Tensor<T>) {
    let eps = T::of(L2_EPS);
    for (r, n) in t.row_norms().into_iter().enumerate() {
        let s = n + eps;
        t.row_mut(r).iter_mut().for_each(|v| *v = *v / s);
    }
}
