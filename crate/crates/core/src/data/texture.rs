//! Patch scrambling: destroys texture below the patch scale while keeping the
//! patch-level layout (and thus the global shape) intact.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Image, ImageSet, LabeledImages, CHANNELS};
use crate::error::Result;
use crate::invalid;
use crate::rng::{derive_seed, rng_from};

pub const DEFAULT_PATCH_SIZE: usize = 8;

/// Permute whole RGB pixels inside every `patch_size x patch_size` patch.
pub fn texture_scramble(img: &Image, patch_size: usize, seed: u64) -> Result<Image> {
    let (h, w) = (img.shape.height, img.shape.width);
    if patch_size == 0 || h % patch_size != 0 || w % patch_size != 0 {
        return invalid!("patch size {patch_size} does not divide a {h}x{w} image");
    }
    let mut out = img.clone();
    let mut rng = rng_from(seed);
    let mut order: Vec<(usize, usize)> = Vec::with_capacity(patch_size * patch_size);
    for py in (0..h).step_by(patch_size) {
        for px in (0..w).step_by(patch_size) {
            order.clear();
            order.extend((0..patch_size).flat_map(|dy| (0..patch_size).map(move |dx| (py + dy, px + dx))));
            order.shuffle(&mut rng);
            let mut k = 0;
            for dy in 0..patch_size {
                for dx in 0..patch_size {
                    let (sy, sx) = order[k];
                    for c in 0..CHANNELS {
                        out.set(c, py + dy, px + dx, img.get(c, sy, sx));
                    }
                    k += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Scramble every record; record `i` uses a seed derived from `(seed, i)`.
pub fn scramble_set(set: &ImageSet, patch_size: usize, seed: u64) -> Result<ImageSet> {
    let mut pixels = Vec::with_capacity(set.pixels().len());
    for i in 0..set.len() {
        let scrambled = texture_scramble(&set.record(i), patch_size, derive_seed(seed, &[i as u64]))?;
        pixels.extend_from_slice(&scrambled.data);
    }
    ImageSet::new(set.shape(), set.num_categories(), pixels, set.labels().to_vec())
}
