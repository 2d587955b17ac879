use proptest::prelude::*;
use synthgap_core::data::{
    compute_channel_stats, generate_split, normalize, render_sample, stratified_reduce, texture_scramble, DatasetSpec,
    Distribution, Image, ImageSet, ImageShape, LabeledImages, Renderer, Split, View,
};
use synthgap_core::rng::rng_from;

fn small_spec(distribution: Distribution, fidelity: f64) -> DatasetSpec {
    DatasetSpec { per_category_train: 60, per_category_val: 10, distribution, fidelity, seed: 11, ..Default::default() }
}

fn mean_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 3.0
}

#[test]
fn proxy_at_half_fidelity_shifts_channel_means() {
    let real = generate_split(&DatasetSpec::default(), Split::Train).unwrap();
    let proxy = generate_split(
        &DatasetSpec { distribution: Distribution::Proxy, fidelity: 0.5, ..Default::default() },
        Split::Train,
    )
    .unwrap();
    let (r, p) = (compute_channel_stats(&real).unwrap(), compute_channel_stats(&proxy).unwrap());
    let max_diff = (0..3).map(|c| (r.mean[c] - p.mean[c]).abs()).fold(0.0, f64::max);
    assert!(max_diff > 0.01, "channel means differ by only {max_diff}: {r:?} vs {p:?}");
}

#[test]
fn channel_mean_distance_shrinks_with_fidelity() {
    let real =
        compute_channel_stats(&generate_split(&small_spec(Distribution::Real, 1.0), Split::Train).unwrap()).unwrap();
    let distances: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&phi| {
            let set = generate_split(&small_spec(Distribution::Proxy, phi), Split::Train).unwrap();
            mean_distance(&compute_channel_stats(&set).unwrap().mean, &real.mean)
        })
        .collect();
    for pair in distances.windows(2) {
        assert!(pair[1] <= pair[0], "distance increased along the fidelity grid: {distances:?}");
    }
    assert_eq!(distances[4], 0.0);
}

#[test]
fn fidelity_one_proxy_matches_real_bytes() {
    for split in [Split::Train, Split::Val] {
        let real = generate_split(&small_spec(Distribution::Real, 1.0), split).unwrap();
        let proxy = generate_split(&small_spec(Distribution::Proxy, 1.0), split).unwrap();
        assert_eq!(real.pixels(), proxy.pixels());
        assert_eq!(real.labels(), proxy.labels());
    }
}

#[test]
fn zero_fidelity_moves_pixels() {
    let renderer = Renderer::new(32, 10);
    for category in 0..10 {
        let seed = 1000 + category as u64;
        let a = render_sample(&renderer, category, Distribution::Proxy, 0.0, &mut rng_from(seed)).unwrap();
        let b = render_sample(&renderer, category, Distribution::Proxy, 1.0, &mut rng_from(seed)).unwrap();
        let mad = a.data.iter().zip(&b.data).map(|(&x, &y)| (i32::from(x) - i32::from(y)).abs()).sum::<i32>() as f64
            / a.data.len() as f64;
        assert!(mad > 0.0, "category {category}");
    }
}

#[test]
fn exact_normalization_closes_on_the_train_split() {
    let set = generate_split(&small_spec(Distribution::Real, 1.0), Split::Train).unwrap();
    let stats = compute_channel_stats(&set).unwrap();
    let plane = set.shape().height * set.shape().width;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for i in 0..set.len() {
        let v = normalize(&View::from_bytes(set.shape(), set.image(i)), &stats);
        for c in 0..3 {
            for &x in &v.data[c * plane..(c + 1) * plane] {
                sum[c] += f64::from(x);
                sum_sq[c] += f64::from(x) * f64::from(x);
            }
        }
    }
    let n = (set.len() * plane) as f64;
    for c in 0..3 {
        let mean = sum[c] / n;
        let std = (sum_sq[c] / n - mean * mean).sqrt();
        assert!(mean.abs() < 1e-4, "channel {c} mean {mean}");
        assert!((std - 1.0).abs() < 1e-4, "channel {c} std {std}");
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = small_spec(Distribution::Proxy, 0.3);
    assert_eq!(generate_split(&spec, Split::Val).unwrap(), generate_split(&spec, Split::Val).unwrap());
    let other = DatasetSpec { seed: 12, ..spec };
    assert_ne!(generate_split(&spec, Split::Val).unwrap(), generate_split(&other, Split::Val).unwrap());
}

fn labelled_set(counts: &[usize]) -> ImageSet {
    let shape = ImageShape::square(1);
    let labels: Vec<u16> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c as u16, n)).collect();
    let pixels = (0..labels.len() * 3).map(|i| (i % 251) as u8).collect();
    ImageSet::new(shape, counts.len(), pixels, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reduction_keeps_floor_per_category(
        counts in prop::collection::vec(1usize..200, 2..6),
        fraction in 0.01f64..=1.0,
        seed in any::<u64>(),
    ) {
        let set = labelled_set(&counts);
        let result = stratified_reduce(&set, fraction, seed);
        let wanted: Vec<usize> = counts.iter().map(|&n| (fraction * n as f64).floor() as usize).collect();
        if wanted.contains(&0) {
            prop_assert!(result.is_err());
        } else {
            let view = result.unwrap();
            for (c, members) in view.per_category().iter().enumerate() {
                prop_assert_eq!(members.len(), wanted[c]);
                prop_assert!(members.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(members.iter().all(|&i| set.label(i) == c));
            }
            prop_assert_eq!(view.len(), wanted.iter().sum::<usize>());
        }
    }

    #[test]
    fn scrambling_preserves_every_patch_multiset(
        patches in 1usize..4,
        patch_size in 1usize..6,
        pixel_seed in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let size = patches * patch_size;
        let shape = ImageShape::square(size);
        let data = (0..shape.len()).map(|i| (pixel_seed.wrapping_mul(i as u64 + 1) >> 37) as u8).collect();
        let img = Image::new(shape, data).unwrap();
        let out = texture_scramble(&img, patch_size, seed).unwrap();
        prop_assert_eq!(&out, &texture_scramble(&img, patch_size, seed).unwrap());
        for py in 0..patches {
            for px in 0..patches {
                let collect = |im: &Image| {
                    let mut v: Vec<[u8; 3]> = (0..patch_size * patch_size)
                        .map(|k| {
                            let (y, x) = (py * patch_size + k / patch_size, px * patch_size + k % patch_size);
                            [im.get(0, y, x), im.get(1, y, x), im.get(2, y, x)]
                        })
                        .collect();
                    v.sort_unstable();
                    v
                };
                prop_assert_eq!(collect(&img), collect(&out));
            }
        }
    }
}
