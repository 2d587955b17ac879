//! On-disk dataset container.
//!
//! A dataset directory holds `manifest.json`, raw `u8` image records in
//! channel-height-width order (`train_images.bin`, `val_images.bin`) and
//! little-endian `u16` labels (`train_labels.bin`, `val_labels.bin`). The
//! manifest is written last, so its presence marks a complete dataset.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use synthgap_core::data::{
    compute_channel_stats, generate_split, stratified_reduce, ChannelStats, DatasetSpec, ImageSet, ImageShape,
    LabeledImages, Split, Subset, CHANNELS,
};

use crate::error::{Error, IoContext, Result};

/// Bumped whenever the renderer's output for a fixed spec changes.
pub const GENERATOR_VERSION: &str = "polygon-grating-1";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub generator_version: String,
    pub spec: DatasetSpec,
    pub shape: ImageShape,
    pub channels: usize,
    pub train_count: usize,
    pub val_count: usize,
    /// Statistics of the train split.
    pub channel_stats: ChannelStats,
}

impl Manifest {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_count,
            Split::Val => self.val_count,
        }
    }

    pub fn record_bytes(&self) -> usize {
        self.shape.len()
    }
}

pub fn images_file(split: Split) -> String {
    format!("{}_images.bin", split.as_str())
}

pub fn labels_file(split: Split) -> String {
    format!("{}_labels.bin", split.as_str())
}

/// A stable directory name for a spec, e.g. `proxy-phi0.50-s7-9c1e04aa`.
pub fn dataset_dir_name(spec: &DatasetSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let hash = json.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    format!("{}-phi{:.2}-s{}-{:08x}", spec.distribution.as_str(), spec.effective_fidelity(), spec.seed, hash as u32)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).at(path)?;
    f.write_all(bytes).at(path)?;
    f.sync_all().at(path)
}

/// Render both splits of `spec` into `out_dir`, replacing any dataset there.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: impl AsRef<Path>) -> Result<DatasetHandle> {
    let out_dir = out_dir.as_ref();
    spec.validate()?;
    fs::create_dir_all(out_dir).at(out_dir)?;
    let manifest_path = out_dir.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).at(&manifest_path)?;
    }
    let train = generate_split(spec, Split::Train)?;
    let val = generate_split(spec, Split::Val)?;
    for (split, set) in [(Split::Train, &train), (Split::Val, &val)] {
        write_file(&out_dir.join(images_file(split)), set.pixels())?;
        let labels: Vec<u8> = set.labels().iter().flat_map(|l| l.to_le_bytes()).collect();
        write_file(&out_dir.join(labels_file(split)), &labels)?;
    }
    let manifest = Manifest {
        generator_version: GENERATOR_VERSION.into(),
        spec: spec.clone(),
        shape: spec.shape(),
        channels: CHANNELS,
        train_count: train.len(),
        val_count: val.len(),
        channel_stats: compute_channel_stats(&train)?,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&manifest_path, json.as_bytes())?;
    let handle = DatasetHandle { root: out_dir.to_path_buf(), manifest, train: OnceLock::new(), val: OnceLock::new() };
    let _ = handle.train.set(train);
    let _ = handle.val.set(val);
    Ok(handle)
}

/// An opened dataset directory. Splits are read from disk on first use.
#[derive(Debug)]
pub struct DatasetHandle {
    root: PathBuf,
    manifest: Manifest,
    train: OnceLock<ImageSet>,
    val: OnceLock<ImageSet>,
}

/// A stratified subset of one split of a [`DatasetHandle`].
pub type DatasetView<'a> = Subset<&'a ImageSet>;

impl DatasetHandle {
    /// Read and check the manifest. File sizes are checked here; contents on
    /// first access.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST);
        if !manifest_path.exists() {
            return Err(Error::NotFound(manifest_path));
        }
        let text = fs::read_to_string(&manifest_path).at(&manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, format!("bad manifest: {e}")))?;
        manifest.spec.validate()?;
        if manifest.shape != manifest.spec.shape() || manifest.channels != CHANNELS {
            return Err(Error::format(&manifest_path, "declared shape disagrees with the spec"));
        }
        for split in [Split::Train, Split::Val] {
            if manifest.count(split) != manifest.spec.count(split) {
                return Err(Error::format(&manifest_path, format!("{} count disagrees with the spec", split.as_str())));
            }
            let n = manifest.count(split);
            check_size(&root.join(images_file(split)), n * manifest.record_bytes())?;
            check_size(&root.join(labels_file(split)), n * 2)?;
        }
        Ok(Self { root, manifest, train: OnceLock::new(), val: OnceLock::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.manifest.spec
    }

    /// The records of `split`, loaded on first call.
    pub fn split(&self, split: Split) -> Result<&ImageSet> {
        let cell = match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
        };
        if let Some(set) = cell.get() {
            return Ok(set);
        }
        let set = self.load(split)?;
        Ok(cell.get_or_init(|| set))
    }

    fn load(&self, split: Split) -> Result<ImageSet> {
        let n = self.manifest.count(split);
        let img_path = self.root.join(images_file(split));
        let pixels = fs::read(&img_path).at(&img_path)?;
        expect_len(&img_path, n * self.manifest.record_bytes(), pixels.len())?;
        let lbl_path = self.root.join(labels_file(split));
        let raw = fs::read(&lbl_path).at(&lbl_path)?;
        expect_len(&lbl_path, n * 2, raw.len())?;
        let labels: Vec<u16> = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        let classes = self.manifest.spec.num_categories;
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::format(&lbl_path, format!("label {bad} outside [0, {classes})")));
        }
        ImageSet::new(self.manifest.shape, classes, pixels, labels).map_err(Error::from)
    }

    /// Stratified reduction of the train split.
    pub fn reduce(&self, fraction: f64, seed: u64) -> Result<DatasetView<'_>> {
        Ok(stratified_reduce(self.split(Split::Train)?, fraction, seed)?)
    }

    /// Channel statistics of the train split, as recorded at generation.
    pub fn channel_stats(&self) -> ChannelStats {
        self.manifest.channel_stats
    }
}

fn expect_len(path: &Path, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::format(path, format!("expected {expected} bytes, found {found}")));
    }
    Ok(())
}

fn check_size(path: &Path, expected: usize) -> Result<()> {
    let meta = fs::metadata(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    expect_len(path, expected, meta.len() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthgap_core::data::Distribution;

    #[test]
    fn names_are_stable_and_distinct() {
        let a = DatasetSpec::default();
        let b = DatasetSpec { distribution: Distribution::Proxy, fidelity: 0.5, ..a.clone() };
        assert_eq!(dataset_dir_name(&a), dataset_dir_name(&a.clone()));
        assert_ne!(dataset_dir_name(&a), dataset_dir_name(&b));
        assert!(dataset_dir_name(&b).starts_with("proxy-phi0.50-s0-"));
    }
}
