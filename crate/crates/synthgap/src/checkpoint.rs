//! Checkpoint directories: `manifest.json` plus `params.bin`, the whole
//! parameter arena (running statistics included) as little-endian `f32`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use synthgap_core::model::{ArchitectureConfig, Model, ParamKind, TransferUnitPartition};

use crate::error::{Error, IoContext, Result};

pub const FORMAT: &str = "synthgap-checkpoint-1";
pub const PARAMS: &str = "params.bin";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryRecord {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub byte_offset: usize,
    pub byte_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRecord {
    pub name: String,
    pub frozen: bool,
    pub byte_offset: usize,
    pub byte_len: usize,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub arch: ArchitectureConfig,
    pub units: Vec<UnitRecord>,
    pub total_bytes: usize,
    /// Seeds that produced the stored state, keyed by role.
    pub seeds: BTreeMap<String, u64>,
}

fn unit_table(partition: &TransferUnitPartition, frozen: &[bool]) -> Vec<UnitRecord> {
    partition
        .units
        .iter()
        .zip(frozen)
        .map(|(u, &frozen)| UnitRecord {
            name: u.name.clone(),
            frozen,
            byte_offset: u.range.start * 4,
            byte_len: u.range.len() * 4,
            entries: partition.entries[u.entries.clone()]
                .iter()
                .map(|e| EntryRecord {
                    name: e.name.clone(),
                    kind: e.kind,
                    shape: e.shape.clone(),
                    byte_offset: e.offset * 4,
                    byte_len: e.len * 4,
                })
                .collect(),
        })
        .collect()
}

pub fn manifest_for(model: &Model, seeds: &BTreeMap<String, u64>) -> CheckpointManifest {
    CheckpointManifest {
        format: FORMAT.into(),
        arch: model.arch().clone(),
        units: unit_table(model.partition(), model.frozen()),
        total_bytes: model.params().len() * 4,
        seeds: seeds.clone(),
    }
}

pub fn save_checkpoint(model: &Model, seeds: &BTreeMap<String, u64>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).at(dir)?;
    let bytes: Vec<u8> = model.params().iter().flat_map(|v| v.to_le_bytes()).collect();
    let params = dir.join(PARAMS);
    fs::write(&params, bytes).at(&params)?;
    let json = serde_json::to_string_pretty(&manifest_for(model, seeds)).expect("manifest serializes");
    let manifest = dir.join(MANIFEST);
    fs::write(&manifest, json).at(&manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<CheckpointManifest> {
    let path = dir.as_ref().join(MANIFEST);
    if !path.exists() {
        return Err(Error::NotFound(path));
    }
    let text = fs::read_to_string(&path).at(&path)?;
    let m: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, format!("bad checkpoint manifest: {e}")))?;
    if m.format != FORMAT {
        return Err(Error::format(&path, format!("unknown checkpoint format {:?}", m.format)));
    }
    Ok(m)
}

/// Restore parameters, running statistics, frozen flags and architecture.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST);
    manifest.arch.validate()?;
    let frozen: Vec<bool> = manifest.units.iter().map(|u| u.frozen).collect();
    let expected_len = Model::build(&manifest.arch, 0)?.params().len();
    let params_path = dir.join(PARAMS);
    let raw = match fs::read(&params_path) {
        Ok(raw) => raw,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::NotFound(params_path)),
        Err(e) => return Err(Error::io(&params_path, e)),
    };
    if raw.len() != expected_len * 4 || manifest.total_bytes != raw.len() {
        return Err(Error::format(&params_path, format!("expected {} bytes, found {}", expected_len * 4, raw.len())));
    }
    let params: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let model =
        Model::from_parts(&manifest.arch, params, frozen).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if unit_table(model.partition(), model.frozen()) != manifest.units {
        return Err(Error::format(&manifest_path, "unit table does not match the architecture"));
    }
    Ok(model)
}

/// Load a checkpoint into an existing model, which must share its
/// architecture. Frozen flags come from the checkpoint.
pub fn load_into(model: &mut Model, dir: impl AsRef<Path>) -> Result<()> {
    let loaded = load_checkpoint(dir)?;
    if loaded.arch() != model.arch() {
        return Err(synthgap_core::Error::Validation(format!(
            "checkpoint architecture {:?} does not match model {:?}",
            loaded.arch(),
            model.arch()
        ))
        .into());
    }
    *model = loaded;
    Ok(())
}
