//! Workspaces and single training runs.
//!
//! A run directory contains `run.json` (the fully materialized [`RunSpec`]),
//! `metrics.csv`, the final `checkpoint/` and `summary.json`. The summary is
//! written last; a directory holding one is complete and is never modified
//! again. Replaying `run.json` reproduces `metrics.csv` byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use synthgap_core::data::{scramble_set, stratified_reduce, DatasetSpec, ImageSet, LabeledImages, Split};
use synthgap_core::model::{ArchitectureConfig, Model};
use synthgap_core::train::{aggregate_last_k, train_with, EpochRecord, SummaryStats, TrainConfig, TrainLog};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::dataset::{dataset_dir_name, generate_dataset, DatasetHandle, GENERATOR_VERSION};
use crate::error::{Error, IoContext, Result};
use crate::report::{format_sig6, parse_csv};

pub const RUN_SPEC: &str = "run.json";
pub const METRICS: &str = "metrics.csv";
pub const SUMMARY: &str = "summary.json";
pub const CHECKPOINT: &str = "checkpoint";
pub const METRICS_HEADER: &str = "epoch,lr,train_loss,val_top1,val_top5";

/// Environment variable naming the default workspace root.
pub const WORKSPACE_ENV: &str = "SYNTHGAP_WORKSPACE";

/// `<root>/{datasets,runs,reports}` plus a cache of opened datasets.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    datasets: Arc<Mutex<HashMap<String, Arc<DatasetHandle>>>>,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), datasets: Arc::default() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn datasets_dir(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn dataset_path(&self, spec: &DatasetSpec) -> PathBuf {
        self.datasets_dir().join(dataset_dir_name(spec))
    }

    /// Open the dataset for `spec`, generating it first when it is missing or
    /// was produced by another generator version.
    pub fn ensure_dataset(&self, spec: &DatasetSpec) -> Result<Arc<DatasetHandle>> {
        let name = dataset_dir_name(spec);
        let mut cache = self.datasets.lock().expect("dataset cache poisoned");
        if let Some(h) = cache.get(&name) {
            return Ok(h.clone());
        }
        let path = self.datasets_dir().join(&name);
        let handle = match DatasetHandle::open(&path) {
            Ok(h) if h.spec() == spec && h.manifest().generator_version == GENERATOR_VERSION => h,
            Ok(_) | Err(Error::NotFound(_)) => generate_dataset(spec, &path)?,
            Err(e) => return Err(e),
        };
        let handle = Arc::new(handle);
        cache.insert(name, handle.clone());
        Ok(handle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureScramble {
    pub patch_size: usize,
    pub seed: u64,
}

/// One split of a generated dataset, optionally scrambled and reduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataRef {
    pub dataset: DatasetSpec,
    pub split: Split,
    #[serde(default = "full")]
    pub fraction: f64,
    #[serde(default)]
    pub reduce_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texture: Option<TextureScramble>,
}

fn full() -> f64 {
    1.0
}

impl DataRef {
    pub fn new(dataset: DatasetSpec, split: Split) -> Self {
        Self { dataset, split, fraction: 1.0, reduce_seed: 0, texture: None }
    }
}

/// Starting point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Init {
    Fresh {
        seed: u64,
    },
    /// Load `checkpoint` (relative to the workspace root), freeze the first
    /// `freeze` units and re-draw the rest from `reinit_seed`.
    Transfer {
        checkpoint: PathBuf,
        freeze: usize,
        reinit_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub arch: ArchitectureConfig,
    pub train: TrainConfig,
    pub init: Init,
    pub train_data: DataRef,
    pub val_data: DataRef,
    pub summary_k: usize,
    pub generator_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `None` when no epochs ran.
    pub stats: Option<SummaryStats>,
    pub last: Option<EpochRecord>,
    pub seeds: BTreeMap<String, u64>,
    /// Transfer runs: whether the frozen prefix still equals the checkpoint.
    pub frozen_prefix_intact: Option<bool>,
    pub spec: RunSpec,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub log: TrainLog,
    /// False when the result was read back from an earlier complete run.
    pub executed: bool,
}

fn seeds_of(spec: &RunSpec) -> BTreeMap<String, u64> {
    let mut seeds = BTreeMap::new();
    seeds.insert("train".into(), spec.train.seed);
    seeds.insert("dataset".into(), spec.train_data.dataset.seed);
    match spec.init {
        Init::Fresh { seed } => seeds.insert("init".into(), seed),
        Init::Transfer { reinit_seed, .. } => seeds.insert("reinit".into(), reinit_seed),
    };
    if spec.train_data.fraction < 1.0 {
        seeds.insert("reduce".into(), spec.train_data.reduce_seed);
    }
    if let Some(t) = spec.train_data.texture {
        seeds.insert("texture".into(), t.seed);
    }
    seeds
}

enum Materialized<'a> {
    Borrowed(&'a ImageSet),
    Owned(ImageSet),
}

impl Materialized<'_> {
    fn set(&self) -> &ImageSet {
        match self {
            Materialized::Borrowed(s) => s,
            Materialized::Owned(s) => s,
        }
    }
}

fn with_data<R>(ws: &Workspace, r: &DataRef, f: impl FnOnce(&dyn LabeledImages) -> Result<R>) -> Result<R> {
    let handle = ws.ensure_dataset(&r.dataset)?;
    let base = handle.split(r.split)?;
    let set = match r.texture {
        Some(t) => Materialized::Owned(scramble_set(base, t.patch_size, t.seed)?),
        None => Materialized::Borrowed(base),
    };
    if r.fraction < 1.0 {
        f(&stratified_reduce(set.set(), r.fraction, r.reduce_seed)?)
    } else {
        // A fraction of exactly 1 is the identity; still validate the range.
        if !(r.fraction > 0.0 && r.fraction <= 1.0) {
            return Err(synthgap_core::Error::Validation(format!("fraction {} outside (0, 1]", r.fraction)).into());
        }
        f(set.set())
    }
}

/// Build the starting model of `spec`.
pub fn initial_model(ws: &Workspace, spec: &RunSpec) -> Result<Model> {
    match &spec.init {
        Init::Fresh { seed } => Ok(Model::build(&spec.arch, *seed)?),
        Init::Transfer { checkpoint, freeze, reinit_seed } => {
            let dir = ws.root().join(checkpoint);
            if !dir.exists() {
                return Err(Error::NotFound(dir));
            }
            let mut model = load_checkpoint(&dir)?;
            if model.arch() != &spec.arch {
                return Err(synthgap_core::Error::Validation(format!(
                    "checkpoint {} has a different architecture",
                    dir.display()
                ))
                .into());
            }
            model.set_frozen(&vec![false; model.unit_count()])?;
            model.freeze_prefix(*freeze)?;
            model.reinit_suffix(*freeze, *reinit_seed)?;
            Ok(model)
        }
    }
}

pub fn write_metrics(log: &TrainLog, path: &Path) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &log.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            format_sig6(r.lr),
            format_sig6(r.train_loss),
            format_sig6(r.val_top1),
            format_sig6(r.val_top5)
        ));
    }
    fs::write(path, out).at(path)
}

pub fn read_metrics(path: &Path) -> Result<TrainLog> {
    let text = fs::read_to_string(path).at(path)?;
    let rows = parse_csv(&text, METRICS_HEADER).map_err(|m| Error::format(path, m))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(path, format!("bad number {s:?}")));
    let mut log = TrainLog::default();
    for row in rows {
        log.records.push(EpochRecord {
            epoch: row[0].parse().map_err(|_| Error::format(path, format!("bad epoch {:?}", row[0])))?,
            lr: num(&row[1])?,
            train_loss: num(&row[2])?,
            val_top1: num(&row[3])?,
            val_top5: num(&row[4])?,
        });
    }
    Ok(log)
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join(SUMMARY);
    let text = fs::read_to_string(&path).at(&path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(SUMMARY).is_file()
}

/// Execute `spec` into `dir`. A complete run already there is read back
/// instead; an incomplete one is discarded and redone.
pub fn execute_run(ws: &Workspace, spec: &RunSpec, dir: &Path, progress: Option<&str>) -> Result<RunResult> {
    if is_complete(dir) {
        let summary = read_summary(dir)?;
        if &summary.spec != spec {
            return Err(synthgap_core::Error::Validation(format!(
                "{} holds a completed run with a different specification",
                dir.display()
            ))
            .into());
        }
        let log = read_metrics(&dir.join(METRICS))?;
        return Ok(RunResult { dir: dir.to_path_buf(), summary, log, executed: false });
    }
    if dir.exists() {
        fs::remove_dir_all(dir).at(dir)?;
    }
    fs::create_dir_all(dir).at(dir)?;
    let spec_path = dir.join(RUN_SPEC);
    fs::write(&spec_path, serde_json::to_string_pretty(spec).expect("spec serializes")).at(&spec_path)?;

    let mut model = initial_model(ws, spec)?;
    let before = model.snapshot();
    let frozen_units = match spec.init {
        Init::Transfer { freeze, .. } => Some(freeze),
        Init::Fresh { .. } => None,
    };
    let log = with_data(ws, &spec.train_data, |train| {
        with_data(ws, &spec.val_data, |val| {
            let mut on_epoch = |r: &EpochRecord| {
                if let Some(label) = progress {
                    eprintln!(
                        "[{label}] epoch {:>3}  lr {:.4}  loss {:.4}  top1 {:.4}  top5 {:.4}",
                        r.epoch + 1,
                        r.lr,
                        r.train_loss,
                        r.val_top1,
                        r.val_top5
                    );
                }
            };
            Ok(train_with(&mut model, train, val, &spec.train, &mut on_epoch)?)
        })
    })?;
    let after = model.snapshot();
    let frozen_prefix_intact = frozen_units.map(|n| (0..n).all(|u| before.unit_eq(&after, u)));

    write_metrics(&log, &dir.join(METRICS))?;
    save_checkpoint(&model, &seeds_of(spec), dir.join(CHECKPOINT))?;
    let k = spec.summary_k.min(log.records.len());
    let summary = RunSummary {
        stats: if k == 0 { None } else { Some(aggregate_last_k(&log, k)?) },
        last: log.records.last().copied(),
        seeds: seeds_of(spec),
        frozen_prefix_intact,
        spec: spec.clone(),
    };
    let path = dir.join(SUMMARY);
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary serializes")).at(&path)?;
    Ok(RunResult { dir: dir.to_path_buf(), summary, log, executed: true })
}

/// Re-execute the materialized spec stored in `run_dir` into `out_dir`.
pub fn replay_run(ws: &Workspace, run_dir: &Path, out_dir: &Path) -> Result<RunResult> {
    let path = run_dir.join(RUN_SPEC);
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let text = fs::read_to_string(&path).at(&path)?;
    let spec: RunSpec = serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if out_dir == run_dir {
        return Err(synthgap_core::Error::Validation("replay target must differ from the source run".into()).into());
    }
    execute_run(ws, &spec, out_dir, None)
}
