//! Per-channel statistics and input normalization.

use super::{LabeledImages, View, CHANNELS};
use crate::error::Result;
use crate::invalid;

/// Lower clamp applied to every standard deviation.
pub const STD_EPSILON: f64 = 1e-6;

/// Mean and population standard deviation per channel, in `[0, 1]` pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    /// Builds stats, clamping each std below at [`STD_EPSILON`].
    pub fn new(mean: [f64; 3], std: [f64; 3]) -> Self {
        Self { mean, std: std.map(|s| if s.is_nan() { STD_EPSILON } else { s.max(STD_EPSILON) }) }
    }

    /// The fixed "default" normalization constants, independent of the data.
    pub fn imagenet_default() -> Self {
        Self::new([0.485, 0.456, 0.406], [0.229, 0.224, 0.225])
    }

    pub fn identity() -> Self {
        Self::new([0.0; 3], [1.0; 3])
    }
}

/// Statistics over every pixel of every record.
///
/// Sums of bytes and squared bytes are accumulated exactly in integers, so
/// the result does not depend on record order.
pub fn compute_channel_stats<D: LabeledImages + ?Sized>(data: &D) -> Result<ChannelStats> {
    if data.is_empty() {
        return invalid!("cannot compute channel statistics of an empty dataset");
    }
    let shape = data.shape();
    let plane = shape.height * shape.width;
    let mut sum = [0u64; CHANNELS];
    let mut sum_sq = [0u64; CHANNELS];
    for i in 0..data.len() {
        let img = data.image(i);
        for c in 0..CHANNELS {
            for &p in &img[c * plane..(c + 1) * plane] {
                let p = u64::from(p);
                sum[c] += p;
                sum_sq[c] += p * p;
            }
        }
    }
    let n = (data.len() * plane) as f64;
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..CHANNELS {
        let m = sum[c] as f64 / n;
        let var = (sum_sq[c] as f64 / n - m * m).max(0.0);
        mean[c] = m / 255.0;
        std[c] = libm::sqrt(var) / 255.0;
    }
    Ok(ChannelStats::new(mean, std))
}

/// `(x - mean) / std` per channel.
pub fn normalize(view: &View, stats: &ChannelStats) -> View {
    let mut out = view.clone();
    normalize_in_place(&mut out, stats);
    out
}

pub fn normalize_in_place(view: &mut View, stats: &ChannelStats) {
    let plane = view.height * view.width;
    for c in 0..CHANNELS {
        let (m, s) = (stats.mean[c] as f32, stats.std[c] as f32);
        for x in &mut view.data[c * plane..(c + 1) * plane] {
            *x = (*x - m) / s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageSet, ImageShape};
    use alloc::vec;

    #[test]
    fn all_zero_images_clamp_std() {
        let shape = ImageShape::square(4);
        let set = ImageSet::new(shape, 2, vec![0; 2 * shape.len()], vec![0, 1]).unwrap();
        let s = compute_channel_stats(&set).unwrap();
        assert_eq!(s.mean, [0.0; 3]);
        assert_eq!(s.std, [STD_EPSILON; 3]);
    }

    #[test]
    fn two_pixel_population_std() {
        // Two 1x1 images, channel 0 values 0 and 255.
        let shape = ImageShape { height: 1, width: 1 };
        let set = ImageSet::new(shape, 2, vec![0, 7, 7, 255, 7, 7], vec![0, 1]).unwrap();
        let s = compute_channel_stats(&set).unwrap();
        assert_eq!(s.mean[0], 0.5);
        assert_eq!(s.std[0], 0.5);
        assert_eq!(s.std[1], STD_EPSILON);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let set = ImageSet::new(ImageShape::square(4), 2, vec![], vec![]).unwrap();
        assert!(compute_channel_stats(&set).is_err());
    }

    #[test]
    fn normalize_identity_and_mean_image() {
        let view = View { height: 1, width: 2, data: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6] };
        assert_eq!(normalize(&view, &ChannelStats::identity()), view);
        let stats = ChannelStats::new([0.25, 0.5, 0.75], [0.1, 0.2, 0.3]);
        let flat = View { height: 1, width: 2, data: vec![0.25, 0.25, 0.5, 0.5, 0.75, 0.75] };
        assert!(normalize(&flat, &stats).data.iter().all(|&x| x == 0.0));
    }
}
