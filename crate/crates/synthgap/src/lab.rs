//! Layer-transfer, data-reduction and ablation protocols over a workspace.
//!
//! Every protocol is a sweep: a directory `runs/<sweep_id>/` holding one run
//! directory per point plus `sweep.csv`, `sweep.json` and the materialized
//! `config.toml`. Sweep ids embed the study seed and a hash of the
//! configuration, so a changed configuration never reuses stale runs while an
//! unchanged one resumes from completed points.
//!
//! Both pretraining runs (real and synthetic) form the `baseline` sweep and
//! are shared by every other protocol with the same data, model and recipe.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthgap_core::analysis::compute_gap;
use synthgap_core::data::{Augmentation, DatasetSpec, Distribution, Split};
use synthgap_core::model::ArchitectureConfig;
use synthgap_core::rng::{derive_seed, tag};
use synthgap_core::train::{Normalization, SummaryStats, TrainConfig};

use crate::config::{AblationKind, Arm, Direction, ExperimentConfig};
use crate::dataset::GENERATOR_VERSION;
use crate::error::{Error, IoContext, Result};
use crate::report::{format_sig6, parse_csv};
use crate::run::{execute_run, DataRef, Init, RunResult, RunSpec, TextureScramble, Workspace, CHECKPOINT};

pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_HEADER: &str = "protocol,param,seed,top1_mean,top1_std,top5_mean,top5_std,status";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error", rename_all = "kebab-case")]
pub enum PointStatus {
    Complete,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub protocol: String,
    /// Point identifier; also the run directory name.
    pub param: String,
    /// Numeric abscissa for plots (N, reduction factor, fidelity, ...).
    pub x: f64,
    pub seed: u64,
    pub stats: Option<SummaryStats>,
    pub final_train_loss: Option<f64>,
    /// Relative to the workspace root.
    pub run_dir: PathBuf,
    pub status: PointStatus,
}

impl SweepRow {
    pub fn is_complete(&self) -> bool {
        self.status == PointStatus::Complete
    }

    pub fn top1(&self) -> Option<f64> {
        self.stats.map(|s| s.top1_mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub id: String,
    pub protocol: String,
    pub rows: Vec<SweepRow>,
    /// Real-only and synthetic-only training, evaluated on real data.
    pub baselines: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_complete()).count()
    }

    pub fn row(&self, param: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.param == param)
    }

    /// A baseline row; the baseline sweep itself keeps them in `rows`.
    pub fn baseline(&self, which: &str) -> Option<&SweepRow> {
        self.baselines.iter().chain(&self.rows).find(|r| r.protocol == BASELINE && r.param == which)
    }

    /// `real - synthetic` top-1 in percentage points, when both exist.
    pub fn gap_pp(&self) -> Option<f64> {
        let real = self.baseline(REAL)?.stats?;
        let synth = self.baseline(SYNTH)?.stats?;
        Some(compute_gap(&real, &synth))
    }

    /// Error out when some points failed (the rest are still recorded).
    pub fn into_result(self) -> Result<Self> {
        match self.failed() {
            0 => Ok(self),
            failed => Err(Error::Partial { failed, total: self.rows.len() }),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in self.baselines.iter().chain(&self.rows) {
            let f = |v: Option<f64>| v.map(format_sig6).unwrap_or_default();
            let s = r.stats;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.protocol,
                r.param,
                r.seed,
                f(s.map(|s| s.top1_mean)),
                f(s.map(|s| s.top1_std)),
                f(s.map(|s| s.top5_mean)),
                f(s.map(|s| s.top5_std)),
                if r.is_complete() { "complete" } else { "failed" }
            ));
        }
        out
    }
}

/// One parsed line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCsvRow {
    pub protocol: String,
    pub param: String,
    pub seed: u64,
    pub top1_mean: Option<f64>,
    pub top1_std: Option<f64>,
    pub top5_mean: Option<f64>,
    pub top5_std: Option<f64>,
    pub status: String,
}

pub fn parse_sweep_csv(text: &str) -> std::result::Result<Vec<SweepCsvRow>, String> {
    let num = |s: &str| -> std::result::Result<Option<f64>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
        }
    };
    parse_csv(text, SWEEP_HEADER)?
        .into_iter()
        .map(|r| {
            Ok(SweepCsvRow {
                protocol: r[0].clone(),
                param: r[1].clone(),
                seed: r[2].parse().map_err(|_| format!("bad seed {:?}", r[2]))?,
                top1_mean: num(&r[3])?,
                top1_std: num(&r[4])?,
                top5_mean: num(&r[5])?,
                top5_std: num(&r[6])?,
                status: r[7].clone(),
            })
        })
        .collect()
}

pub const REAL: &str = "real";
pub const SYNTH: &str = "synth";
const BASELINE: &str = "baseline";

/// A single layer-transfer experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    pub direction: Direction,
    /// Number of leading transfer units kept frozen.
    pub n: usize,
    /// Pretraining run directory, relative to the workspace root.
    pub pretrain_run: PathBuf,
    pub arch: ArchitectureConfig,
    pub retrain: TrainConfig,
    /// Training data of the second stage.
    pub train_data: DataRef,
    /// Always the validation split of a real-distribution dataset.
    pub eval_data: DataRef,
    pub reinit_seed: u64,
    pub summary_k: usize,
}

impl TransferPlan {
    pub fn validate(&self) -> Result<()> {
        let units = self.arch.unit_count();
        if self.n > units {
            return Err(
                synthgap_core::Error::Validation(format!("N = {} exceeds the {units} transfer units", self.n)).into()
            );
        }
        if self.eval_data.dataset.distribution != Distribution::Real || self.eval_data.split != Split::Val {
            return Err(
                synthgap_core::Error::Validation("transfer runs are evaluated on real validation data".into()).into()
            );
        }
        let expected = match self.direction {
            Direction::SynthToReal => Distribution::Real,
            Direction::RealToSynth => Distribution::Proxy,
        };
        if self.train_data.dataset.distribution != expected {
            return Err(synthgap_core::Error::Validation(format!(
                "{} transfer retrains on {} data",
                self.direction.as_str(),
                expected_name(expected)
            ))
            .into());
        }
        Ok(())
    }

    pub fn run_spec(&self) -> RunSpec {
        RunSpec {
            arch: self.arch.clone(),
            train: self.retrain.clone(),
            init: Init::Transfer {
                checkpoint: self.pretrain_run.join(CHECKPOINT),
                freeze: self.n,
                reinit_seed: self.reinit_seed,
            },
            train_data: self.train_data.clone(),
            val_data: self.eval_data.clone(),
            summary_k: self.summary_k,
            generator_version: GENERATOR_VERSION.into(),
        }
    }
}

fn expected_name(d: Distribution) -> &'static str {
    match d {
        Distribution::Real => "real",
        Distribution::Proxy => "synthetic",
    }
}

/// Load the pretrained checkpoint, freeze `N` units, re-draw the rest,
/// retrain on the plan's data and evaluate on real validation data.
pub fn run_transfer_point(ws: &Workspace, plan: &TransferPlan, out_dir: &Path) -> Result<RunResult> {
    plan.validate()?;
    let ckpt = ws.root().join(&plan.pretrain_run).join(CHECKPOINT);
    if !ckpt.exists() {
        return Err(Error::NotFound(ckpt));
    }
    execute_run(ws, &plan.run_spec(), out_dir, None)
}

struct Point {
    param: String,
    x: f64,
    seed: u64,
    spec: RunSpec,
}

fn fnv(text: &str) -> u32 {
    let h = text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    (h ^ (h >> 32)) as u32
}

fn fraction_label(f: f64) -> String {
    format_sig6(f)
}

/// Runs protocols described by one [`ExperimentConfig`] inside a workspace.
#[derive(Debug, Clone)]
pub struct Lab {
    pub ws: Workspace,
    pub cfg: ExperimentConfig,
    /// Sweep points executed concurrently.
    pub jobs: usize,
    /// Print per-epoch progress to standard error.
    pub progress: bool,
}

impl Lab {
    pub fn new(ws: Workspace, cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { ws, cfg, jobs: 1, progress: false })
    }

    fn seed(&self) -> u64 {
        self.cfg.seeds.seed
    }

    fn sweep_seed(&self, protocol: &str) -> u64 {
        derive_seed(self.seed(), &[tag(protocol)])
    }

    /// `<protocol>-s<seed>-<hash>`; the hash covers the given sections.
    fn sweep_id(&self, protocol: &str, hashed: &impl Serialize) -> String {
        let text = serde_json::to_string(hashed).expect("config serializes");
        format!("{protocol}-s{}-{:08x}", self.seed(), fnv(&format!("{GENERATOR_VERSION}/{text}")))
    }

    fn baseline_id(&self) -> String {
        let c = &self.cfg;
        self.sweep_id(BASELINE, &(&c.dataset, &c.model, &c.train, c.protocol.summary_k))
    }

    /// Hash of the whole configuration as it applies to this sweep.
    fn protocol_id(&self, protocol: &str, adjust: impl FnOnce(&mut ExperimentConfig)) -> String {
        let mut c = self.cfg.clone();
        c.output = Default::default();
        adjust(&mut c);
        self.sweep_id(protocol, &c)
    }

    fn real_val(&self) -> DataRef {
        DataRef::new(self.cfg.real_spec(), Split::Val)
    }

    fn train_ref(&self, source: &str) -> DataRef {
        let spec: DatasetSpec =
            if source == REAL { self.cfg.real_spec() } else { self.cfg.proxy_spec(self.cfg.dataset.fidelity) };
        DataRef::new(spec, Split::Train)
    }

    fn fresh(&self, point_seed: u64, train: TrainConfig, train_data: DataRef) -> RunSpec {
        RunSpec {
            arch: self.cfg.arch(),
            train: TrainConfig { seed: derive_seed(point_seed, &[tag("train")]), ..train },
            init: Init::Fresh { seed: derive_seed(point_seed, &[tag("init")]) },
            train_data,
            val_data: self.real_val(),
            summary_k: self.cfg.protocol.summary_k,
            generator_version: GENERATOR_VERSION.into(),
        }
    }

    fn point_seed(&self, protocol: &str, param: &str) -> u64 {
        derive_seed(self.sweep_seed(protocol), &[tag(param)])
    }

    fn run_points(&self, sweep_id: &str, protocol: &str, points: Vec<Point>) -> Result<Vec<SweepRow>> {
        let rel = PathBuf::from("runs").join(sweep_id);
        let dir = self.ws.root().join(&rel);
        fs::create_dir_all(&dir).at(&dir)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        use rayon::prelude::*;
        let rows = pool.install(|| {
            points
                .par_iter()
                .map(|p| {
                    let run_rel = rel.join(&p.param);
                    let label = format!("{sweep_id}/{}", p.param);
                    let outcome = execute_run(
                        &self.ws,
                        &p.spec,
                        &self.ws.root().join(&run_rel),
                        self.progress.then_some(label.as_str()),
                    );
                    let (stats, loss, status) = match outcome {
                        Ok(r) => (r.summary.stats, r.summary.last.map(|l| l.train_loss), PointStatus::Complete),
                        Err(e) => (None, None, PointStatus::Failed(e.to_string())),
                    };
                    if self.progress {
                        match (&status, stats) {
                            (PointStatus::Complete, Some(s)) => {
                                eprintln!("[{label}] done: top1 {:.4} ± {:.4}", s.top1_mean, s.top1_std)
                            }
                            (PointStatus::Complete, None) => eprintln!("[{label}] done"),
                            (PointStatus::Failed(e), _) => eprintln!("[{label}] failed: {e}"),
                        }
                    }
                    SweepRow {
                        protocol: protocol.to_string(),
                        param: p.param.clone(),
                        x: p.x,
                        seed: p.seed,
                        stats,
                        final_train_loss: loss,
                        run_dir: run_rel,
                        status,
                    }
                })
                .collect::<Vec<_>>()
        });
        Ok(rows)
    }

    fn record(&self, result: &SweepResult) -> Result<()> {
        let dir = self.ws.runs_dir().join(&result.id);
        fs::create_dir_all(&dir).at(&dir)?;
        let csv = dir.join(SWEEP_CSV);
        fs::write(&csv, result.to_csv()).at(&csv)?;
        let json = dir.join(SWEEP_JSON);
        fs::write(&json, serde_json::to_string_pretty(result).expect("sweep serializes")).at(&json)?;
        let cfg = dir.join("config.toml");
        fs::write(&cfg, self.cfg.materialized()?).at(&cfg)
    }

    /// Real-only and synthetic-only training from scratch; their final
    /// checkpoints are the pretrained models of the transfer protocols.
    pub fn run_baselines(&self) -> Result<SweepResult> {
        let id = self.baseline_id();
        let train = self.cfg.train_config(0);
        let points = [(REAL, 1.0), (SYNTH, self.cfg.dataset.fidelity)]
            .into_iter()
            .map(|(which, x)| {
                let seed = self.point_seed(BASELINE, which);
                Point { param: which.into(), x, seed, spec: self.fresh(seed, train.clone(), self.train_ref(which)) }
            })
            .collect();
        let rows = self.run_points(&id, BASELINE, points)?;
        let result = SweepResult { id, protocol: BASELINE.into(), rows, baselines: Vec::new() };
        self.record(&result)?;
        Ok(result)
    }

    fn complete_baselines(&self) -> Result<SweepResult> {
        let b = self.run_baselines()?;
        if b.failed() > 0 {
            let msgs: Vec<String> = b
                .rows
                .iter()
                .filter_map(|r| match &r.status {
                    PointStatus::Failed(e) => Some(format!("{}: {e}", r.param)),
                    PointStatus::Complete => None,
                })
                .collect();
            return Err(Error::Config(format!("pretraining failed: {}", msgs.join("; "))));
        }
        Ok(b)
    }

    /// The plan for one transfer point.
    pub fn transfer_plan(&self, baselines: &SweepResult, direction: Direction, n: usize) -> Result<TransferPlan> {
        let (pretrain, second) = match direction {
            Direction::SynthToReal => (SYNTH, REAL),
            Direction::RealToSynth => (REAL, SYNTH),
        };
        let pretrain_run = baselines.baseline(pretrain).expect("baseline rows").run_dir.clone();
        let protocol = format!("transfer-{}", direction.as_str());
        let seed = self.point_seed(&protocol, &format!("n={n}"));
        Ok(TransferPlan {
            direction,
            n,
            pretrain_run,
            arch: self.cfg.arch(),
            retrain: self.cfg.train_config(derive_seed(seed, &[tag("train")])),
            train_data: self.train_ref(second),
            eval_data: self.real_val(),
            reinit_seed: derive_seed(seed, &[tag("reinit")]),
            summary_k: self.cfg.protocol.summary_k,
        })
    }

    /// One point per `N`, all sharing the pretrained checkpoint.
    pub fn run_transfer_sweep(&self, direction: Direction, n_list: &[usize]) -> Result<SweepResult> {
        let baselines = self.complete_baselines()?;
        let protocol = format!("transfer-{}", direction.as_str());
        let mut points = Vec::new();
        for &n in n_list {
            let plan = self.transfer_plan(&baselines, direction, n)?;
            plan.validate()?;
            points.push(Point {
                param: format!("n={n}"),
                x: n as f64,
                seed: self.point_seed(&protocol, &format!("n={n}")),
                spec: plan.run_spec(),
            });
        }
        let id = self.protocol_id(&protocol, |c| {
            c.protocol.direction = direction;
            c.protocol.n = n_list.to_vec();
        });
        let rows = self.run_points(&id, &protocol, points)?;
        let result = SweepResult { id, protocol, rows, baselines: baselines.rows };
        self.record(&result)?;
        Ok(result)
    }

    /// Fine-tune on stratified reductions of the real training set, with and
    /// without the synthetic-pretrained frozen prefix (units `1..U-2`).
    pub fn run_data_reduction_sweep(&self, fractions: &[f64], arms: &[Arm]) -> Result<SweepResult> {
        if fractions.is_empty()
            || fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0))
            || fractions.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(synthgap_core::Error::Validation(format!(
                "fractions must be descending within (0, 1]: {fractions:?}"
            ))
            .into());
        }
        let baselines = self.complete_baselines()?;
        let protocol = "reduce".to_string();
        let sweep_seed = self.sweep_seed(&protocol);
        let freeze = self.cfg.arch().unit_count() - 2;
        let synth_ckpt = baselines.baseline(SYNTH).expect("baseline rows").run_dir.join(CHECKPOINT);
        let mut points = Vec::new();
        for &fraction in fractions {
            let mut data = self.train_ref(REAL);
            data.fraction = fraction;
            data.reduce_seed = derive_seed(sweep_seed, &[tag("reduce"), fraction.to_bits()]);
            for &arm in arms {
                let param = format!("{}@{}", arm.as_str(), fraction_label(fraction));
                let seed = self.point_seed(&protocol, &param);
                let mut spec = self.fresh(seed, self.cfg.train_config(0), data.clone());
                if arm == Arm::SyntheticFrozenPrefix {
                    spec.init = Init::Transfer {
                        checkpoint: synth_ckpt.clone(),
                        freeze,
                        reinit_seed: derive_seed(seed, &[tag("reinit")]),
                    };
                }
                points.push(Point { param, x: 1.0 / fraction, seed, spec });
            }
        }
        let id = self.protocol_id(&protocol, |c| {
            c.protocol.fractions = fractions.to_vec();
            c.protocol.arms = arms.to_vec();
        });
        let rows = self.run_points(&id, &protocol, points)?;
        let result = SweepResult { id, protocol, rows, baselines: baselines.rows };
        self.record(&result)?;
        Ok(result)
    }

    fn ablation_points(&self, kind: AblationKind) -> Vec<(String, f64, TrainConfig, DataRef)> {
        let base = self.cfg.train_config(0);
        let sources = [REAL, SYNTH];
        let mut cells = Vec::new();
        match kind {
            AblationKind::Normalization => {
                for src in sources {
                    for bn in [false, true] {
                        for norm in [Normalization::Default, Normalization::Exact] {
                            let param = format!("{}-bn-eval-{}@{src}", norm.as_str(), if bn { "on" } else { "off" });
                            let cfg = TrainConfig { normalization: norm, bn_eval_update: bn, ..base.clone() };
                            cells.push((param, cells.len() as f64, cfg, self.train_ref(src)));
                        }
                    }
                }
            }
            AblationKind::Augmentation => {
                for src in sources {
                    for aug in [Augmentation::None, Augmentation::Basic, Augmentation::MultiCrop] {
                        let cfg = TrainConfig { augmentation: aug, ..base.clone() };
                        cells.push((
                            format!("{}@{src}", aug.as_str()),
                            aug.views_per_sample() as f64,
                            cfg,
                            self.train_ref(src),
                        ));
                    }
                }
            }
            AblationKind::Texture => {
                let seed = derive_seed(self.sweep_seed("ablate-texture"), &[tag("scramble")]);
                for src in sources {
                    for scrambled in [false, true] {
                        let mut data = self.train_ref(src);
                        if scrambled {
                            data.texture = Some(TextureScramble { patch_size: self.cfg.protocol.patch_size, seed });
                        }
                        let param = format!("{}@{src}", if scrambled { "scrambled" } else { "original" });
                        cells.push((param, scrambled as u8 as f64, base.clone(), data));
                    }
                }
            }
            AblationKind::Fidelity => {
                for &phi in &self.cfg.protocol.fidelities {
                    let data = DataRef::new(self.cfg.proxy_spec(phi), Split::Train);
                    cells.push((format!("fidelity={}", format_sig6(phi)), phi, base.clone(), data));
                }
            }
        }
        cells
    }

    /// One training run per ablation cell, evaluated on real validation data.
    pub fn run_ablation(&self, kind: AblationKind) -> Result<SweepResult> {
        let baselines = self.complete_baselines()?;
        let protocol = format!("ablate-{}", kind.as_str());
        let points = self
            .ablation_points(kind)
            .into_iter()
            .map(|(param, x, cfg, data)| {
                let seed = self.point_seed(&protocol, &param);
                Point { spec: self.fresh(seed, cfg, data), param, x, seed }
            })
            .collect();
        let id = self.protocol_id(&protocol, |c| c.protocol.ablation = kind);
        let rows = self.run_points(&id, &protocol, points)?;
        let result = SweepResult { id, protocol, rows, baselines: baselines.rows };
        self.record(&result)?;
        Ok(result)
    }
}

/// Read every `runs/*/sweep.json`, sorted by sweep id.
pub fn load_registry(ws: &Workspace) -> Result<Vec<SweepResult>> {
    let runs = ws.runs_dir();
    if !runs.exists() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<PathBuf> = fs::read_dir(&runs)
        .at(&runs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SWEEP_JSON).is_file())
        .collect();
    ids.sort();
    ids.iter()
        .map(|dir| {
            let path = dir.join(SWEEP_JSON);
            let text = fs::read_to_string(&path).at(&path)?;
            serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
        })
        .collect()
}
