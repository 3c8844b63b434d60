//! Instance generators and on-disk datasets.
//!
//! * SR pairs: clauses are added until the formula turns unsatisfiable; the
//!   satisfiable twin negates one literal of the final clause.
//! * Random 3-SAT with a fixed clause-to-variable ratio (4.26 by default).
//!
//! Datasets are a directory of DIMACS files plus `manifest.jsonl`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cnf::{self, Assignment, Clause, CnfFormula, Literal};
use crate::error::{Error, Result};
use crate::logic::{dpll_solve_with, DpllOptions, SatResult};
use crate::rng::{self, Rng};

pub const PHASE_TRANSITION_RATIO: f64 = 4.26;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "SR")]
    Sr,
    #[serde(rename = "3SAT")]
    ThreeSat,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SR" => Ok(Family::Sr),
            "3SAT" | "3-SAT" => Ok(Family::ThreeSat),
            other => Err(Error::invalid(format!("unknown family {other:?}"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Family::Sr => "SR",
            Family::ThreeSat => "3SAT",
        })
    }
}

/// Clause-width distribution of the SR generator:
/// `k = base + Bernoulli(p_bernoulli) + Geometric(p_geometric)`, clamped to
/// `[1, n]`, where the geometric variable counts trials (support 1, 2, ...).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrParams {
    pub base: usize,
    pub p_bernoulli: f64,
    pub p_geometric: f64,
}

impl Default for SrParams {
    fn default() -> Self {
        SrParams {
            base: 1,
            p_bernoulli: 0.7,
            p_geometric: 0.4,
        }
    }
}

impl SrParams {
    pub fn sample_width(&self, n: usize, rng: &mut Rng) -> usize {
        let mut k = self.base + usize::from(rng.random_bool(self.p_bernoulli));
        k += 1;
        while !rng.random_bool(self.p_geometric) {
            k += 1;
        }
        k.clamp(1, n.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub id: String,
    pub formula: CnfFormula,
    pub sat: bool,
    /// Present iff `sat`.
    pub witness: Option<Assignment>,
}

impl LabeledInstance {
    pub fn num_vars(&self) -> usize {
        self.formula.num_vars()
    }
}

fn random_clause(n: usize, k: usize, rng: &mut Rng) -> Clause {
    sample(rng, n, k)
        .into_iter()
        .map(|v| Literal::new(v, !rng.random_bool(0.5)))
        .collect()
}

fn solve(f: &CnfFormula, opts: DpllOptions) -> Result<SatResult> {
    dpll_solve_with(f, opts)
}

/// One SR pair `(unsat, sat)` over exactly `n` variables.
pub fn gen_sr_pair(
    n: usize,
    params: &SrParams,
    opts: DpllOptions,
    rng: &mut Rng,
) -> Result<(LabeledInstance, LabeledInstance)> {
    if n < 3 {
        return Err(Error::invalid("SR generation needs n >= 3"));
    }
    let mut clauses: Vec<Clause> = Vec::new();
    // any assignment satisfies the empty formula
    let mut model = vec![false; n];
    loop {
        let k = params.sample_width(n, rng);
        let clause = random_clause(n, k, rng);
        let satisfied_by_model = clause.iter().any(|l| l.eval(model[l.var()]));
        clauses.push(clause);
        if satisfied_by_model {
            continue;
        }
        let f = CnfFormula::new(n, clauses.clone())?;
        match solve(&f, opts)? {
            SatResult::Sat(w) => model = w.0,
            SatResult::Unsat => break,
        }
    }
    let unsat = CnfFormula::new(n, clauses.clone())?;
    let last = clauses.last_mut().expect("at least one clause");
    last[0] = !last[0];
    let sat = CnfFormula::new(n, clauses)?;
    let witness = match solve(&sat, opts)? {
        SatResult::Sat(w) => w,
        SatResult::Unsat => unreachable!("flipping a literal of the final clause restores satisfiability"),
    };
    Ok((
        LabeledInstance {
            id: String::new(),
            formula: unsat,
            sat: false,
            witness: None,
        },
        LabeledInstance {
            id: String::new(),
            formula: sat,
            sat: true,
            witness: Some(witness),
        },
    ))
}

/// Uniform random 3-SAT with `round(ratio * n)` clauses of three distinct
/// variables, labelled by DPLL.
pub fn gen_3sat(n: usize, ratio: f64, opts: DpllOptions, rng: &mut Rng) -> Result<LabeledInstance> {
    let formula = random_3sat_formula(n, ratio, rng)?;
    let witness = solve(&formula, opts)?.witness().cloned();
    Ok(LabeledInstance {
        id: String::new(),
        formula,
        sat: witness.is_some(),
        witness,
    })
}

/// The unlabelled part of [`gen_3sat`].
pub fn random_3sat_formula(n: usize, ratio: f64, rng: &mut Rng) -> Result<CnfFormula> {
    if n < 3 {
        return Err(Error::invalid("3-SAT generation needs n >= 3"));
    }
    if !(ratio > 0.0) {
        return Err(Error::invalid("clause ratio must be positive"));
    }
    let m = (ratio * n as f64).round() as usize;
    let clauses = (0..m).map(|_| random_clause(n, 3, rng)).collect();
    CnfFormula::new(n, clauses)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub family: Family,
    pub n_min: usize,
    pub n_max: usize,
    /// Instances generated before the SAT-only filter (pairs count twice for SR).
    pub count: usize,
    pub sat_only: bool,
    /// 3-SAT only.
    pub clause_ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub sr: SrParams,
}

impl DatasetSpec {
    pub fn sr(n_min: usize, n_max: usize, count: usize, seed: u64) -> Self {
        DatasetSpec {
            family: Family::Sr,
            n_min,
            n_max,
            count,
            sat_only: false,
            clause_ratio: PHASE_TRANSITION_RATIO,
            seed,
            sr: SrParams::default(),
        }
    }

    pub fn three_sat(n_min: usize, n_max: usize, count: usize, seed: u64) -> Self {
        DatasetSpec {
            family: Family::ThreeSat,
            ..DatasetSpec::sr(n_min, n_max, count, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < 3 || self.n_min > self.n_max {
            return Err(Error::invalid(format!(
                "bad variable range [{}, {}] (need 3 <= min <= max)",
                self.n_min, self.n_max
            )));
        }
        if self.family == Family::Sr && !self.count.is_multiple_of(2) {
            return Err(Error::invalid("SR datasets are generated in pairs; count must be even"));
        }
        if !(self.clause_ratio > 0.0) {
            return Err(Error::invalid("clause ratio must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub sat: bool,
    /// `"0101..."`, variable 1 first; `null` for unsatisfiable instances.
    pub witness: Option<String>,
    pub seed: u64,
    pub file: String,
}

impl ManifestRecord {
    fn for_instance(inst: &LabeledInstance, family: Family, seed: u64) -> Self {
        ManifestRecord {
            id: inst.id.clone(),
            family,
            n: inst.formula.num_vars(),
            m: inst.formula.num_clauses(),
            sat: inst.sat,
            witness: inst.witness.as_ref().map(Assignment::to_bitstring),
            seed,
            file: format!("instances/{}.cnf", inst.id),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub records: Vec<ManifestRecord>,
    pub instances: Vec<LabeledInstance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn sat_only(&self) -> Dataset {
        let (records, instances) = self
            .records
            .iter()
            .zip(&self.instances)
            .filter(|(_, i)| i.sat)
            .map(|(r, i)| (r.clone(), i.clone()))
            .unzip();
        Dataset { records, instances }
    }
}

/// Generate the instances described by `spec` in memory.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    generate_with(spec, DpllOptions::default())
}

pub fn generate_with(spec: &DatasetSpec, opts: DpllOptions) -> Result<Dataset> {
    spec.validate()?;
    let mut ds = Dataset::default();
    let mut push = |mut inst: LabeledInstance, id: String, seed: u64| {
        inst.id = id;
        if spec.sat_only && !inst.sat {
            return;
        }
        ds.records.push(ManifestRecord::for_instance(&inst, spec.family, seed));
        ds.instances.push(inst);
    };
    match spec.family {
        Family::Sr => {
            for pair in 0..spec.count / 2 {
                let seed = rng::derive(spec.seed, &[pair as u64]);
                let mut rng = rng::rng(seed);
                let n = rng.random_range(spec.n_min..=spec.n_max);
                let (unsat, sat) = gen_sr_pair(n, &spec.sr, opts, &mut rng)?;
                push(unsat, format!("sr-{pair:06}-unsat"), seed);
                push(sat, format!("sr-{pair:06}-sat"), seed);
            }
        }
        Family::ThreeSat => {
            for i in 0..spec.count {
                let seed = rng::derive(spec.seed, &[i as u64]);
                let mut rng = rng::rng(seed);
                let n = rng.random_range(spec.n_min..=spec.n_max);
                let inst = gen_3sat(n, spec.clause_ratio, opts, &mut rng)?;
                push(inst, format!("3sat-{i:06}"), seed);
            }
        }
    }
    Ok(ds)
}

/// Generate and write a dataset; returns the manifest rows.
pub fn build_dataset(spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let ds = generate(spec)?;
    write_dataset(&ds, out_dir)?;
    Ok(ds.records)
}

pub fn write_dataset(ds: &Dataset, out_dir: impl AsRef<Path>) -> Result<()> {
    let out_dir = out_dir.as_ref();
    let inst_dir = out_dir.join("instances");
    fs::create_dir_all(&inst_dir).map_err(|e| Error::io(&inst_dir, e))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut manifest = Vec::new();
    for (rec, inst) in ds.records.iter().zip(&ds.instances) {
        cnf::write_dimacs_file(out_dir.join(&rec.file), &inst.formula)?;
        serde_json::to_writer(&mut manifest, rec)?;
        manifest.push(b'\n');
    }
    let mut f = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    f.write_all(&manifest).map_err(|e| Error::io(&manifest_path, e))
}

/// Resolve a dataset argument: either a directory holding `manifest.jsonl`
/// or the manifest file itself.
pub fn manifest_path(path: impl AsRef<Path>) -> PathBuf {
    let p = path.as_ref();
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Load a dataset and check it for consistency: every record's file must
/// parse with the recorded `n`/`m`, and every witness must satisfy its formula.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest = manifest_path(path);
    let root = manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut ds = Dataset::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord =
            serde_json::from_str(line).map_err(|e| Error::Dataset(format!("{}:{}: {e}", manifest.display(), i + 1)))?;
        let formula = cnf::read_dimacs_file(root.join(&rec.file))?;
        if formula.num_vars() != rec.n || formula.num_clauses() != rec.m {
            return Err(Error::Dataset(format!(
                "{}: manifest says n={} m={} but the file has n={} m={}",
                rec.id,
                rec.n,
                rec.m,
                formula.num_vars(),
                formula.num_clauses()
            )));
        }
        let witness = rec.witness.as_deref().map(Assignment::from_bitstring).transpose()?;
        match (&witness, rec.sat) {
            (Some(w), true) => {
                if w.len() != rec.n || formula.gap(w.values()) != 0 {
                    return Err(Error::Dataset(format!(
                        "{}: witness does not satisfy the formula",
                        rec.id
                    )));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::Dataset(format!(
                    "{}: a witness must be present exactly when sat=true",
                    rec.id
                )))
            }
        }
        ds.instances.push(LabeledInstance {
            id: rec.id.clone(),
            formula,
            sat: rec.sat,
            witness,
        });
        ds.records.push(rec);
    }
    Ok(ds)
}

/// Table-style statistics of a dataset under random assignments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub instances: usize,
    pub sat_pct: f64,
    pub avg_gap: f64,
    pub sat_gap: f64,
    pub unsat_gap: f64,
    pub avg_clauses: f64,
}

pub fn dataset_stats(instances: &[LabeledInstance], samples: usize, seed: u64) -> Result<DatasetStats> {
    if instances.is_empty() {
        return Err(Error::Dataset("statistics of an empty dataset".into()));
    }
    let mut gaps = Vec::with_capacity(instances.len());
    for (i, inst) in instances.iter().enumerate() {
        let s = cnf::random_gap_stats(&inst.formula, samples, rng::derive(seed, &[i as u64]))?;
        gaps.push((inst.sat, s.mean));
    }
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, c) = it.fold((0.0, 0usize), |(s, c), g| (s + g, c + 1));
        if c == 0 {
            f64::NAN
        } else {
            s / c as f64
        }
    };
    let n_sat = instances.iter().filter(|i| i.sat).count();
    Ok(DatasetStats {
        instances: instances.len(),
        sat_pct: 100.0 * n_sat as f64 / instances.len() as f64,
        avg_gap: mean(&mut gaps.iter().map(|g| g.1)),
        sat_gap: mean(&mut gaps.iter().filter(|g| g.0).map(|g| g.1)),
        unsat_gap: mean(&mut gaps.iter().filter(|g| !g.0).map(|g| g.1)),
        avg_clauses: instances.iter().map(|i| i.formula.num_clauses() as f64).sum::<f64>() / instances.len() as f64,
    })
}
