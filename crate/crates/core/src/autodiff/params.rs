use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the global gradient norm down to this value when exceeded.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

pub const DEFAULT_LR: f64 = 2e-4;
pub const DEFAULT_EMA_BETA: f64 = 0.999;
pub const DEFAULT_ETA_MIN: f64 = 1e-5;

/// Named parameters with Adam moments and an EMA shadow copy.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    values: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
    trainable: Vec<bool>,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    shadow: Vec<Tensor<T>>,
    step: u64,
    pub adam: AdamConfig,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            trainable: Vec::new(),
            m: Vec::new(),
            v: Vec::new(),
            shadow: Vec::new(),
            step: 0,
            adam: AdamConfig::default(),
        }
    }

    /// Register a parameter; its EMA shadow starts equal to the value.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.values.len());
        let (r, c) = (value.rows(), value.cols());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.shadow.push(value.clone());
        self.values.push(value);
        self.grads.push(None);
        self.trainable.push(true);
        self.m.push(Tensor::zeros(r, c));
        self.v.push(Tensor::zeros(r, c));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn shadow(&self, id: ParamId) -> &Tensor<T> {
        &self.shadow[id.0]
    }

    pub fn shadow_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.shadow[id.0]
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    /// Freeze or unfreeze every parameter whose name starts with `prefix`.
    pub fn set_trainable(&mut self, prefix: &str, on: bool) {
        for (i, n) in self.names.iter().enumerate() {
            if n.starts_with(prefix) {
                self.trainable[i] = on;
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter())
            .map(|x| x.f64() * x.f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Scale all accumulated gradients (e.g. to average over a batch).
    pub fn scale_grads(&mut self, s: f64) {
        let s = T::of(s);
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    /// One bias-corrected Adam update; gradients are cleared afterwards.
    pub fn adam_step(&mut self, lr: f64) -> Result<()> {
        for i in 0..self.values.len() {
            if self.trainable[i] && self.grads[i].is_none() {
                return Err(Error::MissingGradient(self.names[i].clone()));
            }
        }
        let cfg = self.adam;
        let clip = match cfg.clip_norm {
            Some(c) => {
                let n = self.grad_norm();
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let c1 = 1.0 - cfg.beta1.powf(t);
        let c2 = 1.0 - cfg.beta2.powf(t);
        let step_size = T::of(lr * c2.sqrt() / c1);
        let eps_hat = T::of(cfg.eps * c2.sqrt());
        let clip = T::of(clip);
        for i in 0..self.values.len() {
            if !self.trainable[i] {
                continue;
            }
            let g = self.grads[i].take().expect("checked above");
            let (m, v, w) = (&mut self.m[i], &mut self.v[i], &mut self.values[i]);
            for k in 0..g.len() {
                let gk = g.data()[k] * clip;
                let mk = b1 * m.data()[k] + (T::one() - b1) * gk;
                let vk = b2 * v.data()[k] + (T::one() - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                w.data_mut()[k] -= step_size * mk / (vk.sqrt() + eps_hat);
            }
        }
        self.zero_grads();
        Ok(())
    }

    /// `shadow = beta * shadow + (1 - beta) * current` for every parameter.
    pub fn ema_update(&mut self, beta: f64) {
        let (b, c) = (T::of(beta), T::of(1.0 - beta));
        for (s, w) in self.shadow.iter_mut().zip(&self.values) {
            for (sv, &wv) in s.data_mut().iter_mut().zip(w.data()) {
                *sv = b * *sv + c * wv;
            }
        }
    }

    /// A copy whose values are the EMA shadow (optimizer state dropped).
    pub fn ema_params(&self) -> ParamStore<T> {
        let mut p = self.clone();
        p.values = self.shadow.clone();
        p.zero_grads();
        p
    }

    /// Convert to another scalar width, keeping names and all state.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let conv = |v: &[Tensor<T>]| v.iter().map(Tensor::cast).collect::<Vec<_>>();
        ParamStore {
            names: self.names.clone(),
            index: self.index.clone(),
            values: conv(&self.values),
            grads: vec![None; self.values.len()],
            trainable: self.trainable.clone(),
            m: conv(&self.m),
            v: conv(&self.v),
            shadow: conv(&self.shadow),
            step: self.step,
            adam: self.adam,
        }
    }
}

/// Cosine annealing from `eta0` to `eta_min` over the first half of
/// training, then constant `eta_min`.
pub fn lr_schedule(epoch: usize, total_epochs: usize, eta0: f64, eta_min: f64) -> f64 {
    let half = total_epochs as f64 / 2.0;
    let e = epoch as f64;
    if half <= 0.0 || e >= half {
        return eta_min;
    }
    eta_min + (eta0 - eta_min) * (1.0 + (std::f64::consts::PI * e / half).cos()) / 2.0
}

#[derive(Serialize, Deserialize)]
struct StoredArray {
    name: String,
    shape: [usize; 2],
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredOptimizer {
    step: u64,
    adam: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

/// JSON checkpoint: named shaped arrays, optimizer and EMA state, and the
/// model config with its hash.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    params: Vec<StoredArray>,
    ema: Vec<Vec<f64>>,
    trainable: Vec<bool>,
    optimizer: StoredOptimizer,
}

const CHECKPOINT_FORMAT: &str = "satgnn-params/1";

/// Hex SHA-256 of the compact JSON form of `config`.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(&serde_json::to_value(config)?)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Checkpoint {
    pub fn capture<T: Scalar, C: Serialize>(store: &ParamStore<T>, config: &C) -> Result<Self> {
        let arrays = |v: &[Tensor<T>]| v.iter().map(Tensor::to_f64).collect::<Vec<_>>();
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            config: serde_json::to_value(config)?,
            config_hash: config_hash(config)?,
            params: store
                .names
                .iter()
                .zip(&store.values)
                .map(|(n, t)| StoredArray {
                    name: n.clone(),
                    shape: [t.rows(), t.cols()],
                    values: t.to_f64(),
                })
                .collect(),
            ema: arrays(&store.shadow),
            trainable: store.trainable.clone(),
            optimizer: StoredOptimizer {
                step: store.step,
                adam: store.adam,
                m: arrays(&store.m),
                v: arrays(&store.v),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        Ok(ck)
    }

    /// Fail unless `config` hashes to the stored hash.
    pub fn check_config<C: Serialize>(&self, config: &C) -> Result<()> {
        let h = config_hash(config)?;
        if h != self.config_hash {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {}, requested {}",
                self.config_hash, h
            )));
        }
        Ok(())
    }

    /// Copy stored values into a store with the same names and shapes.
    pub fn restore_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "{} stored parameters, model has {}",
                self.params.len(),
                store.len()
            )));
        }
        let n = store.len();
        if self.ema.len() != n || self.optimizer.m.len() != n || self.optimizer.v.len() != n {
            return Err(Error::Checkpoint("optimizer or EMA state is incomplete".into()));
        }
        for (i, a) in self.params.iter().enumerate() {
            let id = store
                .id(&a.name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {:?}", a.name)))?;
            let t = store.value(id);
            if [t.rows(), t.cols()] != a.shape {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?}: stored shape {:?}, model {:?}",
                    a.name,
                    a.shape,
                    t.shape()
                )));
            }
            let load = |v: &[f64]| -> Result<Tensor<T>> {
                Tensor::from_f64(a.shape[0], a.shape[1], v)
                    .map_err(|_| Error::Checkpoint(format!("parameter {:?} has a bad length", a.name)))
            };
            store.values[id.0] = load(&a.values)?;
            store.shadow[id.0] = load(&self.ema[i])?;
            store.m[id.0] = load(&self.optimizer.m[i])?;
            store.v[id.0] = load(&self.optimizer.v[i])?;
            store.trainable[id.0] = self.trainable.get(i).copied().unwrap_or(true);
        }
        store.step = self.optimizer.step;
        store.adam = self.optimizer.adam;
        store.zero_grads();
        Ok(())
    }
}
