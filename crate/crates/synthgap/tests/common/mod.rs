#![allow(dead_code)]

use synthgap::config::ExperimentConfig;

/// Three categories of 32x32 images and a two-stage model (U = 4).
pub const TINY: &str = r#"
[dataset]
num_categories = 3
per_category_train = 8
per_category_val = 4
image_size = 32
fidelity = 0.5

[model]
stage_widths = [4, 8]
blocks_per_stage = 1
head_temperature = 0.5

[train]
epochs = 2
warmup_epochs = 1
batch_size = 8

[protocol]
summary_k = 2
fractions = [1.0, 0.5]
fidelities = [0.5, 1.0]
"#;

pub fn tiny_config() -> ExperimentConfig {
    ExperimentConfig::from_toml(TINY).unwrap()
}

pub fn read(path: impl AsRef<std::path::Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Seeds of the desk experiments.
pub const DESK_SEEDS: [u64; 3] = [0, 1, 2];
/// Retained fraction of the desk data-reduction experiment.
pub const DESK_FRACTION: f64 = 0.125;

/// Persistent workspace of the default-configuration desk experiments.
/// Completed runs survive between test invocations and are read back.
pub fn desk_root() -> std::path::PathBuf {
    let root = std::path::PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk");
    std::fs::create_dir_all(&root).unwrap();
    root
}

/// Default-configuration lab for one desk seed. Set
/// `SYNTHGAP_ACCEPTANCE_PROGRESS` to see per-epoch progress.
pub fn desk_lab(seed: u64) -> synthgap::lab::Lab {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds.seed = seed;
    cfg.protocol.fractions = vec![DESK_FRACTION];
    let mut lab = synthgap::lab::Lab::new(synthgap::run::Workspace::new(desk_root()), cfg).unwrap();
    lab.jobs = 2;
    lab.progress = std::env::var_os("SYNTHGAP_ACCEPTANCE_PROGRESS").is_some();
    lab
}
