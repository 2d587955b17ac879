use alloc::vec::Vec;

use rand::seq::index;

use super::{ImageShape, LabeledImages};
use crate::error::Result;
use crate::invalid;
use crate::rng::{derived_rng, tag};

/// A stratified subset of a base collection.
#[derive(Debug, Clone)]
pub struct Subset<D> {
    base: D,
    /// Retained base indices per category, ascending.
    per_category: Vec<Vec<usize>>,
    /// All retained base indices, ascending.
    indices: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
}

impl<D: LabeledImages> Subset<D> {
    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn per_category(&self) -> &[Vec<usize>] {
        &self.per_category
    }
}

impl<D: LabeledImages> LabeledImages for Subset<D> {
    fn len(&self) -> usize {
        self.indices.len()
    }
    fn shape(&self) -> ImageShape {
        self.base.shape()
    }
    fn num_categories(&self) -> usize {
        self.base.num_categories()
    }
    fn image(&self, i: usize) -> &[u8] {
        self.base.image(self.indices[i])
    }
    fn label(&self, i: usize) -> usize {
        self.base.label(self.indices[i])
    }
}

/// Per category, `floor(fraction * count)` indices drawn uniformly without
/// replacement. Each category uses its own stream derived from `seed`.
pub fn stratified_indices<D: LabeledImages + ?Sized>(data: &D, fraction: f64, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return invalid!("fraction must lie in (0, 1], got {fraction}");
    }
    let mut by_category = alloc::vec![Vec::new(); data.num_categories()];
    for i in 0..data.len() {
        by_category[data.label(i)].push(i);
    }
    by_category
        .into_iter()
        .enumerate()
        .map(|(category, members)| {
            let keep = libm::floor(fraction * members.len() as f64) as usize;
            if keep == 0 {
                return invalid!(
                    "fraction {fraction} retains no sample of category {category} ({} available)",
                    members.len()
                );
            }
            let mut rng = derived_rng(seed, &[tag("reduce"), category as u64]);
            let mut picked: Vec<usize> =
                index::sample(&mut rng, members.len(), keep).into_iter().map(|j| members[j]).collect();
            picked.sort_unstable();
            Ok(picked)
        })
        .collect()
}

pub fn stratified_reduce<D: LabeledImages>(data: D, fraction: f64, seed: u64) -> Result<Subset<D>> {
    let per_category = stratified_indices(&data, fraction, seed)?;
    let mut indices: Vec<usize> = per_category.iter().flatten().copied().collect();
    indices.sort_unstable();
    Ok(Subset { base: data, per_category, indices, fraction, seed })
}
