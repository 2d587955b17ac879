use proptest::prelude::*;
use synthgap_core::data::{generate_split, Augmentation, DatasetSpec, ImageSet, Split};
use synthgap_core::model::{cosine_head, ArchitectureConfig, Logits, Mode, Model, ParamKind};
use synthgap_core::tensor::Tensor4;
use synthgap_core::train::{gradient_check, lr_at, topk_accuracy, train, Normalization, TrainConfig};

fn tiny_arch(categories: usize) -> ArchitectureConfig {
    ArchitectureConfig {
        stage_widths: vec![4, 8],
        blocks_per_stage: 1,
        num_categories: categories,
        head_temperature: 0.5,
    }
}

fn tiny_data() -> (ImageSet, ImageSet) {
    let spec = DatasetSpec {
        num_categories: 3,
        per_category_train: 8,
        per_category_val: 4,
        image_size: 16,
        ..Default::default()
    };
    (generate_split(&spec, Split::Train).unwrap(), generate_split(&spec, Split::Val).unwrap())
}

fn two_epochs(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 2, warmup_epochs: 1, batch_size: 8, seed, ..Default::default() }
}

fn batch(n: usize, size: usize, seed: u64) -> Tensor4<f32> {
    let mut t = Tensor4::zeros(3, n, size, size);
    for (i, v) in t.data.iter_mut().enumerate() {
        *v = (((i as u64 + 1).wrapping_mul(seed | 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as f32 / 16_777_216.0)
            - 0.5;
    }
    t
}

#[test]
fn freezing_any_prefix_is_bit_exact() {
    let (train_set, val_set) = tiny_data();
    let arch = tiny_arch(3);
    let pretrained = Model::build(&arch, 1).unwrap();
    let before = pretrained.snapshot();
    let units = arch.unit_count();
    for n in 0..=units {
        let mut model = pretrained.clone();
        model.freeze_prefix(n).unwrap();
        train(&mut model, &train_set, &val_set, &two_epochs(2)).unwrap();
        let after = model.snapshot();
        for u in 0..units {
            if u < n {
                assert!(before.unit_eq(&after, u), "N={n}: frozen unit {} moved", u + 1);
            } else {
                assert!(!before.unit_eq(&after, u), "N={n}: trainable unit {} did not move", u + 1);
            }
        }
    }
}

#[test]
fn reinit_after_two_units_redraws_the_rest() {
    let mut model = Model::build(&ArchitectureConfig::default(), 5).unwrap();
    let before = model.snapshot();
    model.reinit_suffix(2, 6).unwrap();
    assert_eq!(before.changed_units(&model.snapshot()), (2..10).collect::<Vec<_>>());
    let mut same = Model::build(&ArchitectureConfig::default(), 5).unwrap();
    same.reinit_suffix(10, 6).unwrap();
    assert_eq!(same.snapshot(), before);
}

#[test]
fn stem_variance_matches_fan_in() {
    let arch = ArchitectureConfig { stage_widths: vec![128], ..Default::default() };
    let model = Model::build(&arch, 3).unwrap();
    let stem = model.partition().entries.iter().find(|e| e.unit == 0 && e.kind == ParamKind::ConvWeight).unwrap();
    assert_eq!(stem.shape[0], 128);
    let fan_in: usize = stem.shape[1..].iter().product();
    let w = &model.params()[stem.range()];
    let mean = w.iter().map(|&x| f64::from(x)).sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / w.len() as f64;
    let expected = 2.0 / fan_in as f64;
    assert!((var / expected - 1.0).abs() < 0.1, "variance {var}, expected {expected}");
}

#[test]
fn eval_update_flag_controls_running_statistics() {
    let mut model = Model::build(&tiny_arch(3), 8).unwrap();
    let x = batch(4, 16, 3);
    let before = model.snapshot();
    model.forward(&x, Mode::Eval).unwrap();
    assert_eq!(model.snapshot(), before);

    model.set_bn_eval_update(true);
    model.forward(&x, Mode::Eval).unwrap();
    let updated = model.snapshot();
    assert_ne!(updated, before);

    model.set_bn_eval_update(false);
    let a = model.forward(&x, Mode::Eval).unwrap();
    let b = model.forward(&x, Mode::Eval).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.snapshot(), updated);
}

#[test]
fn train_mode_moves_running_means() {
    let mut model = Model::build(&tiny_arch(3), 8).unwrap();
    let before = model.snapshot();
    model.forward(&batch(4, 16, 5), Mode::Train).unwrap();
    let after = model.snapshot();
    let moved = model
        .partition()
        .entries
        .iter()
        .filter(|e| e.kind == ParamKind::RunningMean)
        .any(|e| before.values[e.range()] != after.values[e.range()]);
    assert!(moved);
}

#[test]
fn same_seed_gives_identical_training_logs() {
    let (train_set, val_set) = tiny_data();
    let cfg = TrainConfig { augmentation: Augmentation::Basic, normalization: Normalization::Exact, ..two_epochs(4) };
    let run = || {
        let mut m = Model::build(&tiny_arch(3), 1).unwrap();
        let log = train(&mut m, &train_set, &val_set, &cfg).unwrap();
        (log, m.snapshot())
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn gradients_match_finite_differences() {
    let model = Model::build(&tiny_arch(3), 21).unwrap();
    let x = batch(4, 16, 9);
    let labels = [0, 1, 2, 1];
    let full = gradient_check(&model, &x, &labels, Mode::Eval).unwrap();
    assert!(full.max_rel_error <= 1e-4, "{full:?}");
    let mut probe = model.clone();
    probe.freeze_prefix(probe.unit_count() - 1).unwrap();
    let head = gradient_check(&probe, &x, &labels, Mode::Eval).unwrap();
    assert!(head.max_rel_error <= 1e-6, "{head:?}");
}

#[test]
fn schedule_anchor_points_are_exact() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(&cfg, cfg.warmup_epochs as f64).unwrap(), cfg.base_lr);
    assert_eq!(lr_at(&cfg, cfg.epochs as f64).unwrap(), 0.0);
    let mid = (cfg.warmup_epochs + cfg.epochs) as f64 / 2.0;
    assert_eq!(lr_at(&cfg, mid).unwrap(), cfg.base_lr / 2.0);
}

/// Rank oracle: sort indices by (score descending, index ascending).
fn brute_topk(row: &[f32], label: usize, k: usize) -> bool {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap().then(a.cmp(&b)));
    order[..k].contains(&label)
}

#[test]
fn topk_on_hand_built_rows() {
    let logits = Logits {
        rows: 4,
        cols: 4,
        data: vec![
            0.9, 0.1, 0.0, 0.0, // label 0 ranks first
            0.1, 0.2, 0.3, 0.4, // label 1 ranks third
            0.5, 0.5, 0.1, 0.0, // label 1 tied with 0, ranks second
            0.0, 0.1, 0.2, 0.3, // label 0 ranks last
        ],
    };
    let labels = [0, 1, 1, 0];
    let acc = topk_accuracy(&logits, &labels, &[1, 2, 3, 4]);
    assert_eq!(acc, vec![0.25, 0.5, 0.75, 1.0]);
    for k in 1..=4 {
        let oracle = (0..4).filter(|&i| brute_topk(logits.row(i), labels[i], k)).count() as f64 / 4.0;
        assert_eq!(acc[k - 1], oracle);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn topk_agrees_with_sorting(
        rows in prop::collection::vec(prop::collection::vec(-4i8..4, 5), 1..8),
        k in 1usize..=5,
        label_seed in any::<u64>(),
    ) {
        let data: Vec<f32> = rows.iter().flatten().map(|&v| f32::from(v)).collect();
        let logits = Logits { rows: rows.len(), cols: 5, data };
        let labels: Vec<usize> = (0..rows.len()).map(|i| ((label_seed >> (i * 3)) % 5) as usize).collect();
        let acc = topk_accuracy(&logits, &labels, &[k])[0];
        let oracle = (0..rows.len()).filter(|&i| brute_topk(logits.row(i), labels[i], k)).count() as f64 / rows.len() as f64;
        prop_assert_eq!(acc, oracle);
    }

    #[test]
    fn cosine_head_is_scale_invariant(
        features in prop::collection::vec(-3.0f64..3.0, 6),
        weights in prop::collection::vec(-3.0f64..3.0, 18),
        feature_scale in 0.01f64..100.0,
        row_scales in prop::collection::vec(0.01f64..100.0, 3),
        tau in 0.01f64..10.0,
        tau_scale in 0.01f64..100.0,
    ) {
        prop_assume!(features.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        prop_assume!(weights.chunks(6).all(|r| r.iter().map(|v| v * v).sum::<f64>() > 1e-3));
        let base = cosine_head(&features, &weights, 6, tau);
        let scaled_f: Vec<f64> = features.iter().map(|v| v * feature_scale).collect();
        let scaled_w: Vec<f64> = weights.iter().enumerate().map(|(i, v)| v * row_scales[i / 6]).collect();
        let moved = cosine_head(&scaled_f, &scaled_w, 6, tau);
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
        let argmax = |v: &[f64]| (0..v.len()).fold(0, |best, j| if v[j] > v[best] { j } else { best });
        prop_assert_eq!(argmax(&base), argmax(&cosine_head(&features, &weights, 6, tau * tau_scale)));
    }

    #[test]
    fn schedule_matches_closed_form(t_frac in 0.0f64..=1.0, warmup in 0usize..5, extra in 1usize..40) {
        let cfg = TrainConfig { epochs: warmup + extra, warmup_epochs: warmup, ..Default::default() };
        let (e, w) = (cfg.epochs as f64, warmup as f64);
        let t = t_frac * e;
        let expected = if warmup > 0 && t <= w {
            cfg.base_lr * t / w
        } else {
            cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * (t - w) / (e - w)).cos())
        };
        prop_assert!((lr_at(&cfg, t).unwrap() - expected).abs() <= 1e-12);
    }
}
