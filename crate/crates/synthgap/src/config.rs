//! The TOML experiment configuration.
//!
//! Every section has defaults; [`ExperimentConfig::materialized`] renders the
//! fully populated document that is stored next to the runs it produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthgap_core::data::{Augmentation, DatasetSpec, Distribution, DEFAULT_PATCH_SIZE};
use synthgap_core::model::ArchitectureConfig;
use synthgap_core::train::{Normalization, TrainConfig};

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub num_categories: usize,
    pub per_category_train: usize,
    pub per_category_val: usize,
    pub image_size: usize,
    /// Fidelity of the synthetic proxy.
    pub fidelity: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let d = DatasetSpec::default();
        Self {
            num_categories: d.num_categories,
            per_category_train: d.per_category_train,
            per_category_val: d.per_category_val,
            image_size: d.image_size,
            fidelity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub head_temperature: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = ArchitectureConfig::default();
        Self {
            stage_widths: a.stage_widths,
            blocks_per_stage: a.blocks_per_stage,
            head_temperature: a.head_temperature,
        }
    }
}

/// [`TrainConfig`] without its seed, which is derived per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub augmentation: Augmentation,
    pub normalization: Normalization,
    pub bn_eval_update: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            warmup_epochs: t.warmup_epochs,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            augmentation: t.augmentation,
            normalization: t.normalization,
            bn_eval_update: t.bn_eval_update,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    RealToSynth,
    SynthToReal,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::RealToSynth => "real-to-synth",
            Direction::SynthToReal => "synth-to-real",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Synthetic-pretrained prefix frozen, last two units retrained.
    SyntheticFrozenPrefix,
    /// Fresh model trained end to end.
    None,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::SyntheticFrozenPrefix => "synthetic-frozen-prefix",
            Arm::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationKind {
    Normalization,
    Augmentation,
    Texture,
    Fidelity,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::Normalization => "normalization",
            AblationKind::Augmentation => "augmentation",
            AblationKind::Texture => "texture",
            AblationKind::Fidelity => "fidelity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    /// Window of final epochs aggregated into summary statistics.
    pub summary_k: usize,
    pub direction: Direction,
    /// Transfer points; empty means `0..=U`.
    pub n: Vec<usize>,
    pub fractions: Vec<f64>,
    pub arms: Vec<Arm>,
    pub ablation: AblationKind,
    pub fidelities: Vec<f64>,
    pub patch_size: usize,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            summary_k: 5,
            direction: Direction::SynthToReal,
            n: Vec::new(),
            fractions: vec![1.0, 0.5, 0.25, 0.125],
            arms: vec![Arm::SyntheticFrozenPrefix, Arm::None],
            ablation: AblationKind::Normalization,
            fidelities: vec![0.25, 0.5, 0.75, 1.0],
            patch_size: DEFAULT_PATCH_SIZE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// Workspace root; falls back to `SYNTHGAP_WORKSPACE`, then `./workspace`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workspace: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedSection {
    /// Root of every derived seed in a study.
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub protocol: ProtocolSection,
    pub output: OutputSection,
    pub seeds: SeedSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_toml(&std::fs::read_to_string(path).at(path)?)
    }

    /// The configuration with every default written out.
    pub fn materialized(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.real_spec().validate()?;
        self.proxy_spec(self.dataset.fidelity).validate()?;
        self.arch().validate()?;
        self.train_config(0).validate()?;
        let p = &self.protocol;
        if p.summary_k == 0 {
            return Err(Error::Config("protocol.summary_k must be >= 1".into()));
        }
        if self.train.epochs > 0 && p.summary_k > self.train.epochs {
            return Err(Error::Config(format!(
                "protocol.summary_k ({}) exceeds train.epochs ({})",
                p.summary_k, self.train.epochs
            )));
        }
        let units = self.arch().unit_count();
        if let Some(&n) = p.n.iter().find(|&&n| n > units) {
            return Err(Error::Config(format!("transfer point N={n} exceeds the {units} transfer units")));
        }
        if p.fractions.is_empty() || p.fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::Config(format!("fractions must lie in (0, 1]: {:?}", p.fractions)));
        }
        if p.fractions.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("fractions must be strictly descending: {:?}", p.fractions)));
        }
        if p.arms.is_empty() {
            return Err(Error::Config("at least one reduction arm is required".into()));
        }
        if p.fidelities.is_empty() || p.fidelities.iter().any(|&f| !(0.0..=1.0).contains(&f)) {
            return Err(Error::Config(format!("fidelities must lie in [0, 1]: {:?}", p.fidelities)));
        }
        if p.patch_size == 0 || !self.dataset.image_size.is_multiple_of(p.patch_size) {
            return Err(Error::Config(format!(
                "patch_size {} must divide image_size {}",
                p.patch_size, self.dataset.image_size
            )));
        }
        Ok(())
    }

    fn spec(&self, distribution: Distribution, fidelity: f64) -> DatasetSpec {
        let d = &self.dataset;
        DatasetSpec {
            num_categories: d.num_categories,
            per_category_train: d.per_category_train,
            per_category_val: d.per_category_val,
            image_size: d.image_size,
            distribution,
            fidelity,
            seed: self.seeds.seed,
        }
    }

    pub fn real_spec(&self) -> DatasetSpec {
        self.spec(Distribution::Real, 1.0)
    }

    pub fn proxy_spec(&self, fidelity: f64) -> DatasetSpec {
        self.spec(Distribution::Proxy, fidelity)
    }

    pub fn arch(&self) -> ArchitectureConfig {
        ArchitectureConfig {
            stage_widths: self.model.stage_widths.clone(),
            blocks_per_stage: self.model.blocks_per_stage,
            num_categories: self.dataset.num_categories,
            head_temperature: self.model.head_temperature,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            warmup_epochs: t.warmup_epochs,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            augmentation: t.augmentation,
            normalization: t.normalization,
            bn_eval_update: t.bn_eval_update,
            seed,
        }
    }

    /// Transfer points of the sweep: the configured list or `0..=U`.
    pub fn transfer_points(&self) -> Vec<usize> {
        if self.protocol.n.is_empty() {
            (0..=self.arch().unit_count()).collect()
        } else {
            self.protocol.n.clone()
        }
    }
}
