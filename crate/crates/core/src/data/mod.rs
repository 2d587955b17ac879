//! Paired "real" / "synthetic-proxy" image datasets.
//!
//! The generator, statistics, reduction and transforms here are pure; the
//! on-disk container lives in the `synthgap` crate.

use alloc::vec::Vec;

use crate::error::Result;
use crate::invalid;

pub mod augment;
pub mod render;
pub mod stats;
pub mod texture;

mod reduce;

pub use augment::{apply_augmentation, Augmentation, View};
pub use reduce::{stratified_indices, stratified_reduce, Subset};
pub use render::{generate_split, render_sample, Renderer};
pub use stats::{compute_channel_stats, normalize, ChannelStats, STD_EPSILON};
pub use texture::{scramble_set, texture_scramble, DEFAULT_PATCH_SIZE};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Distribution {
    Real,
    Proxy,
}

impl Distribution {
    pub fn as_str(self) -> &'static str {
        match self {
            Distribution::Real => "real",
            Distribution::Proxy => "proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Parameters of one generated dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DatasetSpec {
    pub num_categories: usize,
    pub per_category_train: usize,
    pub per_category_val: usize,
    pub image_size: usize,
    pub distribution: Distribution,
    /// Generation fidelity in `[0, 1]`; only consulted for `Proxy`.
    pub fidelity: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            num_categories: 10,
            per_category_train: 500,
            per_category_val: 100,
            image_size: 32,
            distribution: Distribution::Real,
            fidelity: 1.0,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_categories < 2 {
            return invalid!("num_categories must be >= 2, got {}", self.num_categories);
        }
        if self.num_categories > usize::from(u16::MAX) {
            return invalid!("num_categories {} does not fit 16-bit labels", self.num_categories);
        }
        if self.per_category_train == 0 || self.per_category_val == 0 {
            return invalid!("per-category counts must be >= 1");
        }
        if self.image_size < 8 {
            return invalid!("image_size must be >= 8, got {}", self.image_size);
        }
        if !(0.0..=1.0).contains(&self.fidelity) {
            return invalid!("fidelity must lie in [0, 1], got {}", self.fidelity);
        }
        Ok(())
    }

    pub fn count(&self, split: Split) -> usize {
        self.num_categories
            * match split {
                Split::Train => self.per_category_train,
                Split::Val => self.per_category_val,
            }
    }

    /// The fidelity the renderer actually applies: `Real` is fidelity 1.
    pub fn effective_fidelity(&self) -> f64 {
        match self.distribution {
            Distribution::Real => 1.0,
            Distribution::Proxy => self.fidelity,
        }
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape { height: self.image_size, width: self.image_size }
    }
}

/// Spatial size of a 3-channel image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn square(size: usize) -> Self {
        Self { height: size, width: size }
    }

    /// Bytes per image (`3 * height * width`).
    pub fn len(&self) -> usize {
        CHANNELS * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An 8-bit RGB image stored channel-major (`[3][height][width]`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    pub shape: ImageShape,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(shape: ImageShape, data: Vec<u8>) -> Result<Self> {
        if data.len() != shape.len() {
            return invalid!("image buffer has {} bytes, shape needs {}", data.len(), shape.len());
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: ImageShape) -> Self {
        Self { shape, data: alloc::vec![0; shape.len()] }
    }

    #[inline]
    pub fn get(&self, channel: usize, y: usize, x: usize) -> u8 {
        self.data[(channel * self.shape.height + y) * self.shape.width + x]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, y: usize, x: usize, v: u8) {
        self.data[(channel * self.shape.height + y) * self.shape.width + x] = v;
    }

    /// Pixels as `[r, g, b]` triples in row-major order.
    pub fn pixels(&self) -> Vec<[u8; 3]> {
        let hw = self.shape.height * self.shape.width;
        (0..hw).map(|i| [self.data[i], self.data[hw + i], self.data[2 * hw + i]]).collect()
    }
}

/// Random-access labelled image collection.
pub trait LabeledImages {
    fn len(&self) -> usize;
    fn shape(&self) -> ImageShape;
    fn num_categories(&self) -> usize;
    /// Channel-major bytes of record `i`.
    fn image(&self, i: usize) -> &[u8];
    fn label(&self, i: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// In-memory images and labels, record-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    shape: ImageShape,
    num_categories: usize,
    pixels: Vec<u8>,
    labels: Vec<u16>,
}

impl ImageSet {
    pub fn new(shape: ImageShape, num_categories: usize, pixels: Vec<u8>, labels: Vec<u16>) -> Result<Self> {
        if pixels.len() != labels.len() * shape.len() {
            return invalid!(
                "{} pixel bytes do not match {} records of {} bytes",
                pixels.len(),
                labels.len(),
                shape.len()
            );
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= num_categories) {
            return invalid!("label {bad} outside [0, {num_categories})");
        }
        Ok(Self { shape, num_categories, pixels, labels })
    }

    pub fn from_images(num_categories: usize, images: &[Image], labels: Vec<u16>) -> Result<Self> {
        let Some(first) = images.first() else {
            return invalid!("no images");
        };
        let shape = first.shape;
        if images.iter().any(|im| im.shape != shape) {
            return invalid!("images of mixed shape");
        }
        let pixels = images.iter().flat_map(|im| im.data.iter().copied()).collect();
        Self::new(shape, num_categories, pixels, labels)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn record(&self, i: usize) -> Image {
        Image { shape: self.shape, data: self.image(i).to_vec() }
    }
}

impl LabeledImages for ImageSet {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn shape(&self) -> ImageShape {
        self.shape
    }
    fn num_categories(&self) -> usize {
        self.num_categories
    }
    fn image(&self, i: usize) -> &[u8] {
        let n = self.shape.len();
        &self.pixels[i * n..(i + 1) * n]
    }
    fn label(&self, i: usize) -> usize {
        usize::from(self.labels[i])
    }
}

impl<D: LabeledImages + ?Sized> LabeledImages for &D {
    fn len(&self) -> usize {
        (**self).len()
    }
    fn shape(&self) -> ImageShape {
        (**self).shape()
    }
    fn num_categories(&self) -> usize {
        (**self).num_categories()
    }
    fn image(&self, i: usize) -> &[u8] {
        (**self).image(i)
    }
    fn label(&self, i: usize) -> usize {
        (**self).label(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(DatasetSpec::default().validate().is_ok());
        let bad = [
            DatasetSpec { num_categories: 1, ..Default::default() },
            DatasetSpec { per_category_train: 0, ..Default::default() },
            DatasetSpec { per_category_val: 0, ..Default::default() },
            DatasetSpec { fidelity: 1.5, ..Default::default() },
            DatasetSpec { fidelity: -0.1, ..Default::default() },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }

    #[test]
    fn default_counts() {
        let spec = DatasetSpec::default();
        assert_eq!(spec.count(Split::Train), 5000);
        assert_eq!(spec.count(Split::Val), 1000);
    }

    #[test]
    fn image_set_rejects_bad_labels() {
        let shape = ImageShape::square(8);
        let err = ImageSet::new(shape, 2, alloc::vec![0; shape.len()], alloc::vec![2]);
        assert!(err.is_err());
    }
}
