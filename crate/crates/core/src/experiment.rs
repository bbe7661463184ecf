//! Experiment configuration and the end-to-end pipelines behind the CLI:
//! simulate, train + evaluate, missing-fraction sweeps and run reports.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::autodiff::save_checkpoint;
use crate::data::{ObservedData, Series};
use crate::error::{Error, Result};
use crate::eval::{evaluate_completion, evaluate_reconstruction, EvalOptions, MetricsReport, Task};
use crate::graph::{generate_ws, partition, write_partition_json, Graph, PartitionedGraph};
use crate::sim::{build_dataset, save_dataset, CmlParams, Dataset, DatasetSpec, Dynamics};
use crate::train::{train_completion, train_reconstruction, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphParams {
    pub n: usize,
    pub k: usize,
    pub p_rewire: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataParams {
    /// Number of independent simulations.
    pub count: usize,
    pub steps: usize,
    pub record_length: usize,
    pub seed: u64,
}

/// Missing nodes for completion: an absolute `count` or a `fraction` of `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    pub seed: u64,
}

impl MissingParams {
    /// Resolved missing-node count for an `n`-node graph (fractions round to nearest).
    pub fn resolve(&self, n: usize) -> Result<usize> {
        match (self.count, self.fraction) {
            (Some(m), None) => Ok(m),
            (None, Some(f)) => Ok((f * n as f64).round() as usize),
            _ => Err(config_err("missing", "give exactly one of `count` or `fraction`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub graph: GraphParams,
    pub dynamics: Dynamics,
    pub dataset: DataParams,
    #[serde(default)]
    pub missing: Option<MissingParams>,
    pub train: TrainConfig,
    /// Sample discrete evaluation states instead of taking the argmax.
    #[serde(default)]
    pub stochastic_states: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn config_err(field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        detail: detail.into(),
    }
}

/// Training defaults for a task on a model; CML completion uses the narrower edge network.
pub fn default_train(task: Task, dynamics: &Dynamics) -> TrainConfig {
    let mut cfg = TrainConfig::for_dynamics(dynamics);
    if task == Task::Complete && !dynamics.is_discrete() {
        cfg.edge_sizes = vec![32, 16, 8, 4];
    }
    cfg
}

/// Sets `path` (dot separated) in a JSON object tree, creating objects on the way.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        if key.is_empty() {
            return Err(config_err(path, "empty key segment"));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| config_err(keys[..i].join("."), "not an object"))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        cur = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Merges `over` into `base` recursively; objects merge, everything else replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Parses a `--set` value: JSON when it parses, a bare string otherwise.
fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Parses a JSON config, applying `key=value` overrides first. Missing
    /// `train` fields are filled from the defaults for the task and model.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: Value = serde_json::from_str(text).map_err(|e| config_err("<root>", e.to_string()))?;
        if !root.is_object() {
            return Err(config_err("<root>", "expected a JSON object"));
        }
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| config_err(kv.as_str(), "override must look like key=value"))?;
            set_path(&mut root, k.trim(), override_value(v.trim()))?;
        }
        let task: Task = match root.get("task") {
            Some(t) => serde_json::from_value(t.clone()).map_err(|e| config_err("task", e.to_string()))?,
            None => return Err(config_err("task", "missing field")),
        };
        let dynamics: Dynamics = match root.get("dynamics") {
            Some(d) => serde_json::from_value(d.clone()).map_err(|e| config_err("dynamics", e.to_string()))?,
            None => return Err(config_err("dynamics", "missing field")),
        };
        let mut train = serde_json::to_value(default_train(task, &dynamics)).expect("defaults serialize");
        if let Some(user) = root.get("train").cloned() {
            if !user.is_object() {
                return Err(config_err("train", "expected an object"));
            }
            merge(&mut train, user);
        }
        root["train"] = train;
        let cfg: Self = serde_path_to_error::deserialize(root).map_err(|e| {
            let field = e.path().to_string();
            config_err(field, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.graph;
        if g.k == 0 || g.k % 2 != 0 || g.k >= g.n {
            return Err(config_err("graph.k", format!("need an even degree 0 < k < n, got k={} n={}", g.k, g.n)));
        }
        if !(0.0..=1.0).contains(&g.p_rewire) {
            return Err(config_err("graph.p_rewire", "outside [0, 1]"));
        }
        if let Dynamics::Cml(p) = &self.dynamics {
            p.validate().map_err(|e| config_err("dynamics", e.to_string()))?;
        }
        self.dataset_spec()
            .validate()
            .map_err(|e| config_err("dataset", e.to_string()))?;
        self.train.validate().map_err(|e| config_err("train", e.to_string()))?;
        if self.train.horizon + 1 > self.dataset_spec().states_per_record() {
            return Err(config_err(
                "train.horizon",
                format!("horizon {} needs records of at least {} states", self.train.horizon, self.train.horizon + 1),
            ));
        }
        match (&self.task, &self.missing) {
            (Task::Complete, None) => return Err(config_err("missing", "completion needs a missing-node spec")),
            (_, Some(m)) => {
                if let Some(f) = m.fraction {
                    if !(0.0..=0.9).contains(&f) {
                        return Err(config_err("missing.fraction", format!("{f} outside [0, 0.9]")));
                    }
                }
                let count = m.resolve(g.n)?;
                if count >= g.n {
                    return Err(config_err("missing", format!("{count} of {} nodes leaves none observed", g.n)));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            dynamics: self.dynamics,
            simulations: self.dataset.count,
            steps: self.dataset.steps,
            record_length: self.dataset.record_length,
        }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.output_dir.join("dataset")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    /// Full-scale sample counts instead of the desk defaults.
    pub fn paper_scale(&mut self) {
        match self.dynamics {
            Dynamics::Voter => {
                self.dataset.count = 200;
                self.dataset.steps = 50;
                self.dataset.record_length = 1;
            }
            Dynamics::Cml(_) => {
                self.dataset.count = 5000;
                self.dataset.steps = 100;
                self.dataset.record_length = 10;
            }
        }
    }

    /// Desk-scale preset on a `WS(n, 4, 0.2)` graph.
    pub fn desk(task: Task, dynamics: Dynamics, n: usize, missing: Option<usize>) -> Self {
        let dataset = match dynamics {
            Dynamics::Voter => DataParams {
                count: 200,
                steps: 50,
                record_length: 1,
                seed: 2,
            },
            Dynamics::Cml(_) => DataParams {
                count: if task == Task::Complete { 200 } else { 100 },
                steps: 100,
                record_length: 10,
                seed: 2,
            },
        };
        Self {
            task,
            graph: GraphParams {
                n,
                k: 4,
                p_rewire: 0.2,
                seed: 1,
            },
            dynamics,
            dataset,
            missing: missing.map(|m| MissingParams {
                count: Some(m),
                fraction: None,
                seed: 3,
            }),
            train: default_train(task, &dynamics),
            stochastic_states: false,
            output_dir: default_output_dir(),
        }
    }

    /// Same experiment with every seed shifted by `offset` (replicates).
    pub fn with_seed_offset(&self, offset: u64) -> Self {
        let mut c = self.clone();
        c.graph.seed += offset;
        c.dataset.seed += offset;
        if let Some(m) = c.missing.as_mut() {
            m.seed += offset;
        }
        c.train.seed += offset;
        c
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(Task::Reconstruct, Dynamics::Cml(CmlParams::default()), 10, None)
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Dataset> {
    let g = generate_ws(cfg.graph.n, cfg.graph.k, cfg.graph.p_rewire, cfg.graph.seed)?;
    build_dataset(&g, &cfg.dataset_spec(), cfg.dataset.seed)
}

pub fn partition_for(cfg: &ExperimentConfig, g: &Graph) -> Result<PartitionedGraph> {
    let m = cfg.missing.as_ref().ok_or_else(|| config_err("missing", "not set"))?;
    partition(g, m.resolve(g.n())?, m.seed)
}

/// Trained parameters of either task.
#[derive(Debug, Clone)]
pub enum Artifacts {
    Reconstruction(crate::train::Reconstruction),
    Completion {
        result: crate::train::Completion,
        partition: PartitionedGraph,
    },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub history: TrainHistory,
    pub artifacts: Artifacts,
}

/// Trains on `ds` per the config and evaluates the result.
pub fn run(cfg: &ExperimentConfig, ds: &Dataset) -> Result<RunOutcome> {
    let mut opts = EvalOptions::new(&cfg.train, &cfg.dynamics);
    opts.stochastic_states = cfg.stochastic_states;
    match cfg.task {
        Task::Reconstruct => {
            let truth = ds.graph.to_adjacency();
            let r = train_reconstruction(ds, &cfg.train, Some(&truth))?;
            let report = evaluate_reconstruction(&r.generator, &r.learner, &Series::full(ds), &truth, &opts)?;
            Ok(RunOutcome {
                report,
                history: r.history.clone(),
                artifacts: Artifacts::Reconstruction(r),
            })
        }
        Task::Complete => {
            let part = partition_for(cfg, &ds.graph)?;
            let obs = ObservedData::new(ds, &part)?;
            let truth = part.full.to_adjacency();
            let c = train_completion(&obs, &cfg.train, Some(&truth))?;
            let report = evaluate_completion(&c.generator, &c.learner, &part, ds, &cfg.train, &opts)?;
            Ok(RunOutcome {
                report,
                history: c.history.clone(),
                artifacts: Artifacts::Completion { result: c, partition: part },
            })
        }
    }
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    run_id: String,
    #[serde(flatten)]
    report: &'a MetricsReport,
    config: &'a ExperimentConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `config.json`, `history.csv`, `metrics.json` and `checkpoints/` into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("config.json"), cfg)?;
    outcome.history.write_csv(&dir.join("history.csv"))?;
    write_json(
        &dir.join("metrics.json"),
        &MetricsFile {
            run_id: cfg.run_id(),
            report: &outcome.report,
            config: cfg,
        },
    )?;
    let ck = dir.join("checkpoints");
    match &outcome.artifacts {
        Artifacts::Reconstruction(r) => {
            save_checkpoint(&ck.join("dyn"), r.learner.params())?;
            save_checkpoint(&ck.join("gumbel"), [r.generator.logits()])?;
        }
        Artifacts::Completion { result, partition } => {
            save_checkpoint(&ck.join("dyn"), result.learner.params())?;
            save_checkpoint(&ck.join("gumbel"), [result.generator.logits()])?;
            save_checkpoint(&ck.join("init"), [result.states.param()])?;
            write_partition_json(partition, &dir.join("partition.json"))?;
        }
    }
    Ok(())
}

/// Simulates and saves the dataset under the config's output directory.
pub fn simulate_to_disk(cfg: &ExperimentConfig, out: &Path) -> Result<Dataset> {
    let ds = simulate(cfg)?;
    save_dataset(&ds, &out.join("dataset"))?;
    write_json(&out.join("config.json"), cfg)?;
    Ok(ds)
}

/// One row of a missing-fraction sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    pub seed: u64,
    /// `Ok(None)` when the metric is undefined; `Err` holds the failure message.
    pub missing_auc: std::result::Result<Option<f64>, String>,
}

pub const SWEEP_HEADER: &str = "missing_fraction,missing_auc,seed";

/// Default fractions 0.1, 0.2, ..., 0.7.
pub fn default_fractions() -> Vec<f64> {
    (1..=7).map(|k| k as f64 / 10.0).collect()
}

/// Completion runs for every fraction and replicate `0..seeds`, executed on
/// up to `threads` workers. Rows come back in (fraction, seed) order.
/// Run directories go to `out/f{fraction}_s{seed}` when `out` is given.
pub fn sweep_missing(
    base: &ExperimentConfig,
    fractions: &[f64],
    seeds: u64,
    threads: usize,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    if base.task != Task::Complete {
        return Err(config_err("task", "the sweep runs completion experiments"));
    }
    let mut jobs = Vec::new();
    for &f in fractions {
        for s in 0..seeds {
            let mut cfg = base.with_seed_offset(s);
            let seed = cfg.missing.as_ref().map_or(0, |m| m.seed);
            cfg.missing = Some(MissingParams {
                count: None,
                fraction: Some(f),
                seed,
            });
            cfg.validate()?;
            jobs.push((f, s, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Training(format!("worker pool: {e}")))?;
    let rows = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(f, s, cfg)| {
                let result = simulate(cfg).and_then(|ds| {
                    let outcome = run(cfg, &ds)?;
                    if let Some(dir) = out {
                        write_run(&dir.join(format!("f{f:.2}_s{s}")), cfg, &outcome)?;
                    }
                    Ok(outcome.report.missing_auc)
                });
                if let Err(e) = &result {
                    log::error!("sweep row fraction={f} seed={s} failed: {e}");
                }
                SweepRow {
                    fraction: *f,
                    seed: *s,
                    missing_auc: result.map_err(|e| e.to_string()),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        let auc = match &r.missing_auc {
            Ok(Some(v)) => v.to_string(),
            Ok(None) => "null".to_string(),
            Err(_) => "error".to_string(),
        };
        s.push_str(&format!("{},{auc},{}\n", r.fraction, r.seed));
    }
    s
}

/// Aggregated metrics of several run directories.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub reconstruct: Vec<ReportRow>,
    pub complete: Vec<ReportRow>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub metrics: MetricsReport,
}

pub fn collect_report(dirs: &[PathBuf]) -> Report {
    let mut report = Report::default();
    for dir in dirs {
        let path = dir.join("metrics.json");
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Value>(&t).map_err(|e| e.to_string()))
            .and_then(|v| serde_json::from_value::<MetricsReport>(strip_extra(v)).map_err(|e| e.to_string()));
        match parsed {
            Ok(metrics) => {
                let row = ReportRow {
                    run: dir.display().to_string(),
                    metrics,
                };
                match row.metrics.task {
                    Task::Reconstruct => report.reconstruct.push(row),
                    Task::Complete => report.complete.push(row),
                }
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                report.skipped.push(dir.display().to_string());
            }
        }
    }
    report
}

fn strip_extra(mut v: Value) -> Value {
    if let Some(o) = v.as_object_mut() {
        o.remove("run_id");
        o.remove("config");
    }
    v
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

pub const REPORT_HEADER: &str = "run\tAUC\tACC(net)\tTPR\tFPR\tACC(states)";

impl Report {
    /// Tab-separated table; completion rows report the missing-block metrics
    /// and both state accuracies (observed / missing).
    pub fn table(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        if !self.reconstruct.is_empty() {
            s.push_str("# reconstruct\n");
            for r in &self.reconstruct {
                let m = &r.metrics;
                s.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.run,
                    cell(m.auc),
                    cell(m.acc_net),
                    cell(m.tpr),
                    cell(m.fpr),
                    cell(m.acc_states)
                ));
            }
        }
        if !self.complete.is_empty() {
            s.push_str("# complete\n");
            for r in &self.complete {
                let m = &r.metrics;
                s.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{} / {}\n",
                    r.run,
                    cell(m.missing_auc),
                    cell(m.missing_acc_net),
                    cell(m.missing_tpr),
                    cell(m.missing_fpr),
                    cell(m.observed_acc_states),
                    cell(m.missing_acc_states)
                ));
            }
        }
        for k in &self.skipped {
            s.push_str(&format!("# skipped {k}\n"));
        }
        s
    }
}
