//! Augmentation pipelines producing float views in `[0, 1]`.

use alloc::vec::Vec;

use rand::Rng as _;

use super::{ImageShape, CHANNELS};
use crate::rng::Rng;

/// Global crops per sample under multi-crop.
pub const GLOBAL_CROPS: usize = 1;
/// Local crops per sample under multi-crop.
pub const LOCAL_CROPS: usize = 8;
pub const GLOBAL_SCALE: (f64, f64) = (0.4, 1.0);
pub const LOCAL_SCALE: (f64, f64) = (0.05, 0.4);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Augmentation {
    /// The full image, unchanged.
    #[default]
    None,
    /// One random-resized crop plus a random horizontal flip.
    Basic,
    /// One global and eight local random-resized crops, each randomly flipped.
    MultiCrop,
}

impl Augmentation {
    pub fn as_str(self) -> &'static str {
        match self {
            Augmentation::None => "none",
            Augmentation::Basic => "basic",
            Augmentation::MultiCrop => "multi-crop",
        }
    }

    pub fn views_per_sample(self) -> usize {
        match self {
            Augmentation::None | Augmentation::Basic => 1,
            Augmentation::MultiCrop => GLOBAL_CROPS + LOCAL_CROPS,
        }
    }
}

/// A channel-major float image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl View {
    pub fn from_bytes(shape: ImageShape, bytes: &[u8]) -> Self {
        Self { height: shape.height, width: shape.width, data: bytes.iter().map(|&b| f32::from(b) / 255.0).collect() }
    }
}

struct Crop {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

/// Random-resized-crop box: area fraction in `scale`, aspect ratio
/// log-uniform in `[3/4, 4/3]`, ten attempts before falling back to the
/// whole image.
fn crop_box(shape: ImageShape, scale: (f64, f64), rng: &mut Rng) -> Crop {
    let area = (shape.height * shape.width) as f64;
    let (log_lo, log_hi) = (libm::log(3.0 / 4.0), libm::log(4.0 / 3.0));
    for _ in 0..10 {
        let target = area * (scale.0 + (scale.1 - scale.0) * rng.random::<f64>());
        let ratio = libm::exp(log_lo + (log_hi - log_lo) * rng.random::<f64>());
        let w = libm::round(libm::sqrt(target * ratio)) as usize;
        let h = libm::round(libm::sqrt(target / ratio)) as usize;
        if (1..=shape.width).contains(&w) && (1..=shape.height).contains(&h) {
            let top = rng.random_range(0..=shape.height - h);
            let left = rng.random_range(0..=shape.width - w);
            return Crop { top, left, height: h, width: w };
        }
    }
    Crop { top: 0, left: 0, height: shape.height, width: shape.width }
}

/// Bilinear resample of a crop to `out x out` (half-pixel centres).
fn resample(shape: ImageShape, bytes: &[u8], crop: &Crop, out: usize, flip: bool) -> View {
    let plane = shape.height * shape.width;
    let sy = crop.height as f64 / out as f64;
    let sx = crop.width as f64 / out as f64;
    let mut data = Vec::with_capacity(CHANNELS * out * out);
    for c in 0..CHANNELS {
        let src = &bytes[c * plane..(c + 1) * plane];
        for oy in 0..out {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (crop.height - 1) as f64);
            let y0 = libm::floor(fy) as usize;
            let y1 = (y0 + 1).min(crop.height - 1);
            let ty = fy - y0 as f64;
            for ox in 0..out {
                let ox = if flip { out - 1 - ox } else { ox };
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (crop.width - 1) as f64);
                let x0 = libm::floor(fx) as usize;
                let x1 = (x0 + 1).min(crop.width - 1);
                let tx = fx - x0 as f64;
                let at = |y: usize, x: usize| f64::from(src[(crop.top + y) * shape.width + crop.left + x]);
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
                let bottom = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
                data.push(((top * (1.0 - ty) + bottom * ty) / 255.0) as f32);
            }
        }
    }
    View { height: out, width: out, data }
}

fn random_view(shape: ImageShape, bytes: &[u8], scale: (f64, f64), out: usize, rng: &mut Rng) -> View {
    let crop = crop_box(shape, scale, rng);
    let flip = rng.random_bool(0.5);
    resample(shape, bytes, &crop, out, flip)
}

/// Apply a pipeline to one channel-major image.
///
/// Multi-crop returns the global view first; local views have half the
/// input side length.
pub fn apply_augmentation(shape: ImageShape, bytes: &[u8], pipeline: Augmentation, rng: &mut Rng) -> Vec<View> {
    debug_assert_eq!(bytes.len(), shape.len());
    let size = shape.height.min(shape.width);
    match pipeline {
        Augmentation::None => alloc::vec![View::from_bytes(shape, bytes)],
        Augmentation::Basic => alloc::vec![random_view(shape, bytes, GLOBAL_SCALE, size, rng)],
        Augmentation::MultiCrop => {
            let mut views = Vec::with_capacity(GLOBAL_CROPS + LOCAL_CROPS);
            for _ in 0..GLOBAL_CROPS {
                views.push(random_view(shape, bytes, GLOBAL_SCALE, size, rng));
            }
            for _ in 0..LOCAL_CROPS {
                views.push(random_view(shape, bytes, LOCAL_SCALE, size / 2, rng));
            }
            views
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn gradient_image(size: usize) -> Vec<u8> {
        (0..3 * size * size).map(|i| (i % 251) as u8).collect()
    }

    #[test]
    fn multicrop_cardinalities() {
        let shape = ImageShape::square(32);
        let views = apply_augmentation(shape, &gradient_image(32), Augmentation::MultiCrop, &mut rng_from(1));
        assert_eq!(views.len(), 9);
        assert_eq!((views[0].height, views[0].width), (32, 32));
        assert!(views[1..].iter().all(|v| v.height == 16 && v.width == 16 && v.data.len() == 3 * 256));
    }

    #[test]
    fn none_is_scaled_input() {
        let shape = ImageShape::square(8);
        let img = gradient_image(8);
        let views = apply_augmentation(shape, &img, Augmentation::None, &mut rng_from(0));
        assert_eq!(views.len(), 1);
        for (v, &b) in views[0].data.iter().zip(&img) {
            assert_eq!(*v, f32::from(b) / 255.0);
        }
    }

    #[test]
    fn basic_is_deterministic() {
        let shape = ImageShape::square(32);
        let img = gradient_image(32);
        let a = apply_augmentation(shape, &img, Augmentation::Basic, &mut rng_from(77));
        let b = apply_augmentation(shape, &img, Augmentation::Basic, &mut rng_from(77));
        assert_eq!(a, b);
        assert_eq!(a[0].data.len(), 3 * 32 * 32);
    }

    #[test]
    fn full_crop_resample_is_exact() {
        let shape = ImageShape::square(6);
        let img = gradient_image(6);
        let crop = Crop { top: 0, left: 0, height: 6, width: 6 };
        let v = resample(shape, &img, &crop, 6, false);
        assert_eq!(v, View::from_bytes(shape, &img));
        let flipped = resample(shape, &img, &crop, 6, true);
        assert_eq!(flipped.data[0], v.data[5]);
    }

    #[test]
    fn crop_boxes_respect_area_bounds() {
        let shape = ImageShape::square(32);
        let mut rng = rng_from(3);
        for _ in 0..200 {
            let c = crop_box(shape, LOCAL_SCALE, &mut rng);
            assert!(c.top + c.height <= 32 && c.left + c.width <= 32);
            let frac = (c.height * c.width) as f64 / 1024.0;
            // rounding of each side widens the band slightly
            assert!(frac <= 0.5 || (c.height, c.width) == (32, 32), "{frac}");
        }
    }
}
