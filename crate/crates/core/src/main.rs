use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use satgnn::cnf::{self, CnfFormula};
use satgnn::diffusion::{self, DenoiserConfig, DiffusionRun, PosteriorMode};
use satgnn::generate::{self, Dataset, DatasetSpec, Family, LabeledInstance, SrParams};
use satgnn::graph::GraphKind;
use satgnn::infer::{self, DecisionMode, EvalItem, EvalRecord, Metrics, SolveOptions};
use satgnn::model::{AssignmentLoss, Cell};
use satgnn::sdp::{self, Rounding, SdpOptions, SdpRecord};
use satgnn::train::{self, CurriculumConfig, LossMode, TrainConfig};

/// Message-passing SAT/MaxSAT toolkit.
#[derive(Parser)]
#[command(name = "satgnn", version)]
struct Cli {
    /// TOML file with one table per subcommand; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset (DIMACS files plus a manifest).
    Generate(GenerateArgs),
    /// Table-style statistics of a dataset under random assignments.
    Stats(StatsArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Solve DIMACS files or a dataset; reports solve rates and step counts.
    Solve(SolveArgs),
    /// Evaluate gap and accuracy metrics on a dataset.
    Eval(EvalArgs),
    /// Grid of metrics over message-passing iterations and resamples.
    Sweep(SweepArgs),
    /// Denoiser training and diffusion / UP-guided solving.
    Diffuse {
        #[command(subcommand)]
        command: DiffuseCommand,
    },
    /// Vector relaxation of MAX-2-SAT with randomized rounding.
    Sdp(SdpArgs),
}

#[derive(Subcommand)]
enum DiffuseCommand {
    Train(DenoiseTrainArgs),
    Solve(DiffuseSolveArgs),
}

// ---------------------------------------------------------------- config

/// Read `[section]` (a dotted path) from the config file, or defaults.
/// Keys the resolved config does not know about are rejected.
fn section<C: DeserializeOwned + Serialize + Default>(file: Option<&Path>, name: &str) -> Result<C> {
    let Some(path) = file else {
        return Ok(C::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let root: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut value = toml::Value::Table(root);
    for part in name.split('.') {
        match value.get(part) {
            Some(v) => value = v.clone(),
            None => return Ok(C::default()),
        }
    }
    let parsed: C = value
        .clone()
        .try_into()
        .with_context(|| format!("bad [{name}] table in {}", path.display()))?;
    let known = toml::Value::try_from(&parsed)?;
    if let Some(key) = unknown_key(&value, &known, "") {
        bail!("unknown key {key:?} in [{name}] of {}", path.display());
    }
    Ok(parsed)
}

fn unknown_key(given: &toml::Value, known: &toml::Value, prefix: &str) -> Option<String> {
    let (toml::Value::Table(g), toml::Value::Table(k)) = (given, known) else {
        return None;
    };
    for (key, v) in g {
        let path = format!("{prefix}{key}");
        match k.get(key) {
            None => return Some(path),
            Some(kv) => {
                if let Some(bad) = unknown_key(v, kv, &format!("{path}.")) {
                    return Some(bad);
                }
            }
        }
    }
    None
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .with_context(|| format!("missing {what} (flag or config key)"))
}

/// Log the resolved config and write it next to the outputs.
fn record_config<C: Serialize>(name: &str, cfg: &C, out_dir: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(cfg)?;
    info!("resolved {name} config:\n{json}");
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("config.json"), json + "\n")?;
    }
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(infer::write_csv(path, rows)?)
}

fn load_nonempty(path: &Path) -> Result<Dataset> {
    let ds = generate::load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?;
    if ds.instances.is_empty() {
        bail!("dataset {} has no instances", path.display());
    }
    Ok(ds)
}

fn items(instances: &[LabeledInstance]) -> Vec<EvalItem<'_>> {
    instances
        .iter()
        .map(|i| EvalItem {
            id: &i.id,
            formula: &i.formula,
            sat: Some(i.sat),
        })
        .collect()
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}", 100.0 * v))
}

fn num(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.2}"))
}

fn table(header: &[&str], rows: &[Vec<String>]) {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            rows.iter()
                .map(|r| r[c].len())
                .chain([header[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        println!("{}", padded.join("  "));
    };
    line(header.to_vec());
    for r in rows {
        line(r.iter().map(String::as_str).collect());
    }
}

// -------------------------------------------------------------- generate

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Instances before the SAT-only filter.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    sat_only: Option<bool>,
    /// Clauses per variable for 3-SAT.
    #[arg(long)]
    clause_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct GenerateConfig {
    family: Family,
    n_min: usize,
    n_max: usize,
    count: usize,
    sat_only: bool,
    clause_ratio: f64,
    seed: u64,
    sr: SrParams,
    out: Option<PathBuf>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        let spec = DatasetSpec::sr(10, 40, 1000, 0);
        GenerateConfig {
            family: spec.family,
            n_min: spec.n_min,
            n_max: spec.n_max,
            count: spec.count,
            sat_only: spec.sat_only,
            clause_ratio: spec.clause_ratio,
            seed: spec.seed,
            sr: spec.sr,
            out: None,
        }
    }
}

fn cmd_generate(file: Option<&Path>, a: GenerateArgs) -> Result<()> {
    let mut c: GenerateConfig = section(file, "generate")?;
    set(&mut c.family, a.family);
    set(&mut c.n_min, a.n_min);
    set(&mut c.n_max, a.n_max);
    set(&mut c.count, a.count);
    set(&mut c.sat_only, a.sat_only);
    set(&mut c.clause_ratio, a.clause_ratio);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out, a.out);
    let out = require(&c.out, "--out")?.to_path_buf();
    record_config("generate", &c, None)?;
    let spec = DatasetSpec {
        family: c.family,
        n_min: c.n_min,
        n_max: c.n_max,
        count: c.count,
        sat_only: c.sat_only,
        clause_ratio: c.clause_ratio,
        seed: c.seed,
        sr: c.sr,
    };
    let records = generate::build_dataset(&spec, &out)?;
    write_json(&out.join("config.json"), &c)?;
    let sat = records.iter().filter(|r| r.sat).count();
    println!(
        "wrote {} instances ({} SAT, {} UNSAT) to {}",
        records.len(),
        sat,
        records.len() - sat,
        out.display()
    );
    Ok(())
}

// ----------------------------------------------------------------- stats

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Random assignments per instance.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct StatsConfig {
    data: Option<PathBuf>,
    samples: usize,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            data: None,
            samples: 100,
            seed: 0,
            out: None,
        }
    }
}

fn cmd_stats(file: Option<&Path>, a: StatsArgs) -> Result<()> {
    let mut c: StatsConfig = section(file, "stats")?;
    set_opt(&mut c.data, a.data);
    set(&mut c.samples, a.samples);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out, a.out);
    record_config("stats", &c, None)?;
    let ds = load_nonempty(require(&c.data, "--data")?)?;
    let s = generate::dataset_stats(&ds.instances, c.samples, c.seed)?;
    table(
        &["instances", "SAT%", "Avg. Gap", "SAT Gap", "UNSAT Gap", "Avg. Clauses"],
        &[vec![
            s.instances.to_string(),
            format!("{:.1}", s.sat_pct),
            format!("{:.2}", s.avg_gap),
            format!("{:.2}", s.sat_gap),
            format!("{:.2}", s.unsat_gap),
            format!("{:.2}", s.avg_clauses),
        ]],
    );
    if let Some(out) = &c.out {
        write_json(out, &s)?;
    }
    Ok(())
}

// ----------------------------------------------------------------- train

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Directory for the checkpoints, epoch log and summary.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    graph: Option<GraphKind>,
    #[arg(long)]
    cell: Option<Cell>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    t_train: Option<usize>,
    /// sat | assignment | unsupervised | closest
    #[arg(long)]
    loss: Option<LossMode>,
    /// CE | MSE
    #[arg(long)]
    assignment_loss: Option<AssignmentLoss>,
    #[arg(long)]
    sat_only: Option<bool>,
    /// Grow the training size from small instances up to the largest.
    #[arg(long)]
    curriculum: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ema_beta: Option<f64>,
    #[arg(long)]
    eval_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct TrainCmdConfig {
    data: Option<PathBuf>,
    val: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    #[serde(flatten)]
    train: TrainConfig,
}

#[derive(Serialize)]
struct TrainSummary {
    best_epoch: Option<usize>,
    best_metric: Option<f64>,
    epochs: usize,
    final_loss: Option<f64>,
}

fn cmd_train(file: Option<&Path>, a: TrainArgs) -> Result<()> {
    let mut c: TrainCmdConfig = section(file, "train")?;
    set_opt(&mut c.data, a.data);
    set_opt(&mut c.val, a.val);
    set_opt(&mut c.out_dir, a.out_dir);
    let t = &mut c.train;
    set(&mut t.model.graph_kind, a.graph);
    set(&mut t.model.cell, a.cell);
    if let Some(d) = a.d_model {
        t.model.d_model = d;
        t.model.mlp_hidden = vec![d];
    }
    set(&mut t.model.t_train, a.t_train);
    set(&mut t.loss, a.loss);
    set(&mut t.assignment_loss, a.assignment_loss);
    set(&mut t.sat_only, a.sat_only);
    if a.curriculum && t.curriculum.is_none() {
        t.curriculum = Some(CurriculumConfig::default());
    }
    set(&mut t.epochs, a.epochs);
    set(&mut t.batch_size, a.batch_size);
    set(&mut t.lr, a.lr);
    set(&mut t.ema_beta, a.ema_beta);
    set(&mut t.eval_iters, a.eval_iters);
    set(&mut t.seed, a.seed);
    c.train.validate()?;
    let out = require(&c.out_dir, "--out-dir")?.to_path_buf();
    record_config("train", &c, Some(&out))?;
    let data = load_nonempty(require(&c.data, "--data")?)?;
    let val = load_nonempty(require(&c.val, "--val")?)?;
    let outcome = train::train(&c.train, &data, &val)?;
    train::save_model(&outcome.best, &out.join("model.json"))?;
    train::save_model(&outcome.last, &out.join("last.json"))?;
    train::write_log(&out.join("epochs.csv"), &outcome.log)?;
    let summary = TrainSummary {
        best_epoch: outcome.best_epoch,
        best_metric: outcome.best_metric,
        epochs: outcome.log.len(),
        final_loss: outcome.log.last().map(|l| l.loss),
    };
    write_json(&out.join("summary.json"), &summary)?;
    let rows: Vec<Vec<String>> = outcome
        .log
        .iter()
        .map(|l| {
            vec![
                l.epoch.to_string(),
                l.size.map_or("-".into(), |s| s.to_string()),
                format!("{:.4}", l.loss),
                format!("{:.2e}", l.lr),
                pct(l.val_ema),
                pct(l.val_raw),
            ]
        })
        .collect();
    table(&["epoch", "size", "loss", "lr", "val EMA %", "val raw %"], &rows);
    println!(
        "best epoch: {}",
        summary.best_epoch.map_or("-".into(), |e| e.to_string())
    );
    Ok(())
}

// ----------------------------------------------------------- solve / eval

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    /// A dataset directory or manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    /// DIMACS files (used when no dataset is given).
    inputs: Vec<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    early_stop: Option<bool>,
    /// Independent attempts per instance (best of k).
    #[arg(long)]
    samples: Option<usize>,
    /// Decode by two-means clustering of the embeddings instead of the readout.
    #[arg(long)]
    cluster: Option<bool>,
    /// Also export a PCA trajectory of this many rounds for each DIMACS input.
    #[arg(long)]
    trajectory: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SolveConfig {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    max_iters: usize,
    early_stop: bool,
    samples: usize,
    cluster: bool,
    trajectory: Option<usize>,
    seed: u64,
    out_dir: Option<PathBuf>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let o = SolveOptions::default();
        SolveConfig {
            model: None,
            data: None,
            inputs: Vec::new(),
            max_iters: o.max_iters,
            early_stop: o.early_stop,
            samples: 1,
            cluster: false,
            trajectory: None,
            seed: 0,
            out_dir: None,
        }
    }
}

/// Instances from a dataset, or unlabelled DIMACS files.
fn load_inputs(data: &Option<PathBuf>, inputs: &[PathBuf]) -> Result<Vec<LabeledOpt>> {
    if let Some(d) = data {
        return Ok(load_nonempty(d)?
            .instances
            .into_iter()
            .map(|i| LabeledOpt {
                id: i.id,
                formula: i.formula,
                sat: Some(i.sat),
            })
            .collect());
    }
    if inputs.is_empty() {
        bail!("nothing to solve: pass --data or DIMACS files");
    }
    inputs
        .iter()
        .map(|p| {
            Ok(LabeledOpt {
                id: p.display().to_string(),
                formula: cnf::read_dimacs_file(p)?,
                sat: None,
            })
        })
        .collect()
}

struct LabeledOpt {
    id: String,
    formula: CnfFormula,
    sat: Option<bool>,
}

fn cmd_solve(file: Option<&Path>, a: SolveArgs) -> Result<()> {
    let mut c: SolveConfig = section(file, "solve")?;
    set_opt(&mut c.model, a.model);
    set_opt(&mut c.data, a.data);
    if !a.inputs.is_empty() {
        c.inputs = a.inputs;
    }
    set(&mut c.max_iters, a.max_iters);
    set(&mut c.early_stop, a.early_stop);
    set(&mut c.samples, a.samples);
    set(&mut c.cluster, a.cluster);
    set_opt(&mut c.trajectory, a.trajectory);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out_dir, a.out_dir);
    record_config("solve", &c, c.out_dir.as_deref())?;
    let model = train::load_model(require(&c.model, "--model")?)?;
    let insts = load_inputs(&c.data, &c.inputs)?;
    let opts = SolveOptions {
        max_iters: c.max_iters,
        early_stop: c.early_stop,
    };
    let its: Vec<EvalItem> = insts
        .iter()
        .map(|i| EvalItem {
            id: &i.id,
            formula: &i.formula,
            sat: i.sat,
        })
        .collect();
    let records = if c.cluster {
        cluster_records(&model, &its, opts, c.samples, c.seed)?
    } else {
        infer::evaluate(&model, &its, opts, c.samples, c.seed)?
    };
    let metrics = infer::aggregate(&records, DecisionMode::Assignment);
    if let Some(dir) = &c.out_dir {
        write_csv(&dir.join("records.csv"), &records)?;
        write_json(&dir.join("summary.json"), &metrics)?;
        if let (Some(t), None) = (c.trajectory, &c.data) {
            for (k, inst) in insts.iter().enumerate() {
                let tr =
                    infer::export_trajectory(&model, &inst.formula, t, infer::instance_seeds(c.seed, insts.len())[k])?;
                write_csv(&dir.join(format!("trajectory_{k}.csv")), &tr.rows)?;
                write_csv(&dir.join(format!("variance_{k}.csv")), &tr.variance)?;
            }
        }
    }
    if c.data.is_none() {
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.id.clone(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.best_gap.to_string(),
                    r.steps.to_string(),
                    if r.best_gap == 0 {
                        "SAT".into()
                    } else {
                        "UNKNOWN".into()
                    },
                ]
            })
            .collect();
        table(&["instance", "n", "m", "gap", "step", "status"], &rows);
        return Ok(());
    }
    let steps = |a: Option<f64>, m: Option<f64>| format!("{}/{}", num(a), num(m));
    table(
        &[
            "instances",
            "Decision Acc.",
            "Solved %",
            "Gap==1 %",
            "SAT Steps (Avg/Med)",
            "UNSAT Steps (Avg/Med)",
        ],
        &[vec![
            metrics.instances.to_string(),
            pct(metrics.decision_accuracy),
            pct(metrics.sat_accuracy),
            pct(metrics.unsat_gap1),
            steps(metrics.sat_steps_avg, metrics.sat_steps_median),
            steps(metrics.unsat_steps_avg, metrics.unsat_steps_median),
        ]],
    );
    Ok(())
}

fn cluster_records(
    model: &satgnn::model::Model<f32>,
    its: &[EvalItem],
    opts: SolveOptions,
    samples: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let seeds = infer::instance_seeds(seed, its.len());
    its.iter()
        .zip(seeds)
        .map(|(it, s)| {
            let mut best: Option<(usize, usize)> = None;
            let mut attempts = 0;
            for j in 0..samples.max(1) {
                attempts = j + 1;
                let r = infer::cluster_solve(model, it.formula, opts, infer::attempt_seed(s, j))?;
                if best.is_none_or(|(g, _)| r.best_gap < g) {
                    best = Some((r.best_gap, r.best_iter));
                }
                if r.best_gap == 0 {
                    break;
                }
            }
            let (gap, step) = best.expect("at least one attempt");
            Ok(EvalRecord {
                id: it.id.to_string(),
                n: it.formula.num_vars(),
                m: it.formula.num_clauses(),
                sat: it.sat,
                best_gap: gap,
                steps: step,
                predicted_sat: gap == 0,
                attempts,
            })
        })
        .collect()
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// assignment | classifier
    #[arg(long)]
    decision: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct EvalConfig {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    max_iters: usize,
    samples: usize,
    decision: DecisionMode,
    seed: u64,
    out_dir: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model: None,
            data: None,
            max_iters: SolveOptions::default().max_iters,
            samples: 1,
            decision: DecisionMode::Assignment,
            seed: 0,
            out_dir: None,
        }
    }
}

fn parse_decision(s: &str) -> Result<DecisionMode> {
    match s.to_ascii_lowercase().as_str() {
        "assignment" => Ok(DecisionMode::Assignment),
        "classifier" => Ok(DecisionMode::Classifier),
        other => bail!("unknown decision mode {other:?} (assignment | classifier)"),
    }
}

fn metric_row(m: &Metrics) -> Vec<String> {
    vec![
        m.instances.to_string(),
        num(Some(m.avg_gap)),
        num(m.sat_gap),
        num(m.unsat_gap),
        pct(m.sat_accuracy),
        format!(
            "{}{}",
            pct(m.decision_accuracy),
            if m.decision_mode == DecisionMode::Classifier {
                "*"
            } else {
                ""
            }
        ),
    ]
}

const METRIC_HEADER: [&str; 6] = [
    "instances",
    "Avg. Gap",
    "SAT Gap",
    "UNSAT Gap",
    "SAT Acc. %",
    "Decision Acc. %",
];

fn cmd_eval(file: Option<&Path>, a: EvalArgs) -> Result<()> {
    let mut c: EvalConfig = section(file, "eval")?;
    set_opt(&mut c.model, a.model);
    set_opt(&mut c.data, a.data);
    set(&mut c.max_iters, a.max_iters);
    set(&mut c.samples, a.samples);
    set(&mut c.decision, a.decision.as_deref().map(parse_decision).transpose()?);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out_dir, a.out_dir);
    record_config("eval", &c, c.out_dir.as_deref())?;
    let ds = load_nonempty(require(&c.data, "--data")?)?;
    let model = train::load_model(require(&c.model, "--model")?)?;
    let its = items(&ds.instances);
    let records = match c.decision {
        DecisionMode::Assignment => {
            let opts = SolveOptions {
                max_iters: c.max_iters,
                early_stop: true,
            };
            infer::evaluate(&model, &its, opts, c.samples, c.seed)?
        }
        DecisionMode::Classifier => infer::evaluate_classifier(&model, &its, c.max_iters, c.seed)?,
    };
    let metrics = infer::aggregate(&records, c.decision);
    if let Some(dir) = &c.out_dir {
        write_csv(&dir.join("records.csv"), &records)?;
        write_json(&dir.join("summary.json"), &metrics)?;
    }
    table(&METRIC_HEADER, &[metric_row(&metrics)]);
    if c.decision == DecisionMode::Classifier {
        println!("* decision from the satisfiability classifier");
    }
    Ok(())
}

// ----------------------------------------------------------------- sweep

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated iteration levels.
    #[arg(long, value_delimiter = ',')]
    iters: Option<Vec<usize>>,
    /// Comma-separated resample levels.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SweepConfig {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    iters: Vec<usize>,
    samples: Vec<usize>,
    seed: u64,
    out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            model: None,
            data: None,
            iters: vec![25, 50, 75, 100, 125],
            samples: vec![1, 2, 3, 4, 5],
            seed: 0,
            out: None,
        }
    }
}

fn cmd_sweep(file: Option<&Path>, a: SweepArgs) -> Result<()> {
    let mut c: SweepConfig = section(file, "sweep")?;
    set_opt(&mut c.model, a.model);
    set_opt(&mut c.data, a.data);
    set(&mut c.iters, a.iters);
    set(&mut c.samples, a.samples);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out, a.out);
    record_config("sweep", &c, None)?;
    let ds = load_nonempty(require(&c.data, "--data")?)?;
    let model = train::load_model(require(&c.model, "--model")?)?;
    let cells = infer::sweep(&model, &items(&ds.instances), &c.iters, &c.samples, c.seed)?;
    if let Some(out) = &c.out {
        write_csv(out, &cells)?;
    }
    let mut header = vec!["iters \\ samples".to_string()];
    header.extend(c.samples.iter().map(|s| s.to_string()));
    let rows: Vec<Vec<String>> = c
        .iters
        .iter()
        .map(|&t| {
            let mut row = vec![t.to_string()];
            for &k in &c.samples {
                let cell = cells.iter().find(|x| x.iters == t && x.samples == k);
                row.push(pct(cell.and_then(|x| x.decision_accuracy)));
            }
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    println!("decision accuracy (%)");
    table(&h, &rows);
    Ok(())
}

// --------------------------------------------------------------- diffuse

#[derive(Args)]
struct DenoiseTrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    graph: Option<GraphKind>,
    #[arg(long)]
    cell: Option<Cell>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    t_train: Option<usize>,
    /// Noise schedule length T.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    ema_beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct DenoiseTrainConfig {
    data: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    #[serde(flatten)]
    denoiser: DenoiserConfig,
}

fn cmd_denoise_train(file: Option<&Path>, a: DenoiseTrainArgs) -> Result<()> {
    let mut c: DenoiseTrainConfig = section(file, "diffuse.train")?;
    set_opt(&mut c.data, a.data);
    set_opt(&mut c.out_dir, a.out_dir);
    let d = &mut c.denoiser;
    set(&mut d.model.graph_kind, a.graph);
    set(&mut d.model.cell, a.cell);
    if let Some(k) = a.d_model {
        d.model.d_model = k;
        d.model.mlp_hidden = vec![k];
    }
    set(&mut d.model.t_train, a.t_train);
    set(&mut d.schedule.steps, a.steps);
    set(&mut d.epochs, a.epochs);
    set(&mut d.batch_size, a.batch_size);
    set(&mut d.lr, a.lr);
    set(&mut d.ema_beta, a.ema_beta);
    set(&mut d.seed, a.seed);
    let out = require(&c.out_dir, "--out-dir")?.to_path_buf();
    record_config("diffuse train", &c, Some(&out))?;
    let data = load_nonempty(require(&c.data, "--data")?)?.sat_only();
    if data.instances.is_empty() {
        bail!("the denoiser needs satisfiable instances with witnesses");
    }
    let outcome = diffusion::train_denoiser(&c.denoiser, &data)?;
    train::save_model(&outcome.model, &out.join("model.json"))?;
    train::save_model(&outcome.last, &out.join("last.json"))?;
    write_csv(&out.join("epochs.csv"), &outcome.log)?;
    let rows: Vec<Vec<String>> = outcome
        .log
        .iter()
        .map(|e| vec![e.epoch.to_string(), format!("{:.4}", e.loss), format!("{:.2e}", e.lr)])
        .collect();
    table(&["epoch", "loss", "lr"], &rows);
    Ok(())
}

#[derive(Args)]
struct DiffuseSolveArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Message-passing rounds per denoising call.
    #[arg(long)]
    gnn_steps: Option<usize>,
    #[arg(long)]
    diffusion_steps: Option<usize>,
    /// categorical | argmax | rounding
    #[arg(long)]
    posterior: Option<PosteriorMode>,
    /// Comma-separated UP thresholds.
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    max_calls: Option<usize>,
    /// Compare plain diffusion with the unit-propagation guided search.
    #[arg(long)]
    up: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct DiffuseSolveConfig {
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    up: bool,
    seed: u64,
    out_dir: Option<PathBuf>,
    #[serde(flatten)]
    run: DiffusionRun,
}

fn cmd_diffuse_solve(file: Option<&Path>, a: DiffuseSolveArgs) -> Result<()> {
    let mut c: DiffuseSolveConfig = section(file, "diffuse.solve")?;
    set_opt(&mut c.model, a.model);
    set_opt(&mut c.data, a.data);
    set(&mut c.up, a.up);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out_dir, a.out_dir);
    set(&mut c.run.gnn_steps, a.gnn_steps);
    set(&mut c.run.diffusion_steps, a.diffusion_steps);
    set(&mut c.run.posterior, a.posterior);
    set(&mut c.run.thresholds, a.thresholds);
    set(&mut c.run.max_calls, a.max_calls);
    c.run.validate()?;
    record_config("diffuse solve", &c, c.out_dir.as_deref())?;
    let ds = load_nonempty(require(&c.data, "--data")?)?;
    let model = train::load_model(require(&c.model, "--model")?)?;
    if c.up {
        let (report, records) = diffusion::up_report(&model, &ds.instances, &c.run, c.seed)?;
        if let Some(dir) = &c.out_dir {
            write_csv(&dir.join("records.csv"), &records)?;
            write_json(&dir.join("summary.json"), &report)?;
        }
        table(
            &[
                "instances",
                "Diffusion Acc. %",
                "UP Acc. %",
                "Calls (all)",
                "Calls (solved)",
                "Calls (unsolved)",
            ],
            &[vec![
                report.instances.to_string(),
                pct(Some(report.diffusion_accuracy)),
                pct(Some(report.up_accuracy)),
                num(Some(report.total_calls)),
                num(report.solved_calls),
                num(report.unsolved_calls),
            ]],
        );
        return Ok(());
    }
    let fs: Vec<&CnfFormula> = ds.instances.iter().map(|i| &i.formula).collect();
    let seeds = infer::instance_seeds(c.seed, fs.len());
    let results = diffusion::diffusion_solve_batch(&model, &fs, &c.run, &seeds)?;
    let records: Vec<EvalRecord> = ds
        .instances
        .iter()
        .zip(results)
        .map(|(i, r)| EvalRecord {
            id: i.id.clone(),
            n: i.formula.num_vars(),
            m: i.formula.num_clauses(),
            sat: Some(i.sat),
            best_gap: r.best_gap,
            steps: r.best_iter,
            predicted_sat: r.best_gap == 0,
            attempts: 1,
        })
        .collect();
    let metrics = infer::aggregate(&records, DecisionMode::Assignment);
    if let Some(dir) = &c.out_dir {
        write_csv(&dir.join("records.csv"), &records)?;
        write_json(&dir.join("summary.json"), &metrics)?;
    }
    table(&METRIC_HEADER, &[metric_row(&metrics)]);
    Ok(())
}

// ------------------------------------------------------------------- sdp

#[derive(Args)]
struct SdpArgs {
    /// DIMACS files with clauses of width at most two.
    inputs: Vec<PathBuf>,
    /// Number of random MAX-2-SAT instances (used when no files are given).
    #[arg(long)]
    random: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Clauses per variable of the random instances.
    #[arg(long)]
    clause_ratio: Option<usize>,
    /// Random hyperplanes per instance; 0 rounds by sign.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(default)]
struct SdpConfig {
    inputs: Vec<PathBuf>,
    random: usize,
    n_min: usize,
    n_max: usize,
    clause_ratio: usize,
    trials: usize,
    seed: u64,
    out_dir: Option<PathBuf>,
    solver: SdpOptions,
}

impl Default for SdpConfig {
    fn default() -> Self {
        SdpConfig {
            inputs: Vec::new(),
            random: 50,
            n_min: 4,
            n_max: 12,
            clause_ratio: 3,
            trials: 64,
            seed: 0,
            out_dir: None,
            solver: SdpOptions::default(),
        }
    }
}

#[derive(Serialize)]
struct SdpSummary {
    instances: usize,
    mean_ratio: f64,
    min_ratio: f64,
    mean_relaxation_gap: f64,
}

fn cmd_sdp(file: Option<&Path>, a: SdpArgs) -> Result<()> {
    let mut c: SdpConfig = section(file, "sdp")?;
    if !a.inputs.is_empty() {
        c.inputs = a.inputs;
    }
    set(&mut c.random, a.random);
    set(&mut c.n_min, a.n_min);
    set(&mut c.n_max, a.n_max);
    set(&mut c.clause_ratio, a.clause_ratio);
    set(&mut c.trials, a.trials);
    set(&mut c.solver.iters, a.iters);
    set(&mut c.seed, a.seed);
    set_opt(&mut c.out_dir, a.out_dir);
    if c.n_min < 2 || c.n_min > c.n_max {
        bail!("need 2 <= n_min <= n_max");
    }
    record_config("sdp", &c, c.out_dir.as_deref())?;
    let rounding = if c.trials == 0 {
        Rounding::Sign
    } else {
        Rounding::Hyperplane(c.trials)
    };
    let mut formulas = Vec::new();
    if c.inputs.is_empty() {
        let span = (c.n_max - c.n_min + 1) as u64;
        for i in 0..c.random {
            let s = satgnn::rng::derive(c.seed, &[0, i as u64]);
            let n = c.n_min + (s % span) as usize;
            formulas.push((
                format!("max2sat-{i:04}"),
                sdp::random_max2sat(n, c.clause_ratio * n, s)?,
            ));
        }
    } else {
        for p in &c.inputs {
            formulas.push((p.display().to_string(), cnf::read_dimacs_file(p)?));
        }
    }
    if formulas.is_empty() {
        bail!("no instances");
    }
    let records: Vec<SdpRecord> = formulas
        .iter()
        .enumerate()
        .map(|(i, (id, f))| sdp::sdp_record(id, f, c.solver, rounding, satgnn::rng::derive(c.seed, &[1, i as u64])))
        .collect::<satgnn::Result<_>>()?;
    let k = records.len() as f64;
    let summary = SdpSummary {
        instances: records.len(),
        mean_ratio: records.iter().map(|r| r.ratio).sum::<f64>() / k,
        min_ratio: records.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min),
        mean_relaxation_gap: records.iter().map(|r| r.relaxation - r.optimum as f64).sum::<f64>() / k,
    };
    if let Some(dir) = &c.out_dir {
        write_csv(&dir.join("records.csv"), &records)?;
        write_json(&dir.join("summary.json"), &summary)?;
    }
    table(
        &["instances", "mean ratio", "min ratio", "relaxation - optimum"],
        &[vec![
            summary.instances.to_string(),
            format!("{:.4}", summary.mean_ratio),
            format!("{:.4}", summary.min_ratio),
            format!("{:.4}", summary.mean_relaxation_gap),
        ]],
    );
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let file = cli.config.as_deref();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(file, a),
        Command::Stats(a) => cmd_stats(file, a),
        Command::Train(a) => cmd_train(file, a),
        Command::Solve(a) => cmd_solve(file, a),
        Command::Eval(a) => cmd_eval(file, a),
        Command::Sweep(a) => cmd_sweep(file, a),
        Command::Diffuse { command } => match command {
            DiffuseCommand::Train(a) => cmd_denoise_train(file, a),
            DiffuseCommand::Solve(a) => cmd_diffuse_solve(file, a),
        },
        Command::Sdp(a) => cmd_sdp(file, a),
    };
    if let Err(e) = res {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
