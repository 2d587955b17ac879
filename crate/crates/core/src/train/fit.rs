use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::metrics::{topk_accuracy, EpochRecord, Metrics, TrainLog};
use super::{lr_at, Normalization, Sgd, TrainConfig};
use crate::data::stats::normalize_in_place;
use crate::data::{apply_augmentation, compute_channel_stats, Augmentation, ChannelStats, LabeledImages, View};
use crate::error::{Error, Result};
use crate::invalid;
use crate::model::head::softmax_cross_entropy;
use crate::model::{Mode, Model};
use crate::rng::{derived_rng, tag};
use crate::tensor::Tensor4;

/// Stack equally sized views into a `[3, n, h, w]` tensor.
pub fn batch_views(views: &[&View]) -> Tensor4<f32> {
    let (h, w) = (views[0].height, views[0].width);
    let hw = h * w;
    let n = views.len();
    let mut t = Tensor4::zeros(3, n, h, w);
    for (j, v) in views.iter().enumerate() {
        debug_assert_eq!((v.height, v.width), (h, w));
        for c in 0..3 {
            t.data[(c * n + j) * hw..(c * n + j + 1) * hw].copy_from_slice(&v.data[c * hw..(c + 1) * hw]);
        }
    }
    t
}

/// Normalized, unaugmented views of records `indices`.
pub fn val_views<D: LabeledImages + ?Sized>(data: &D, indices: &[usize], stats: &ChannelStats) -> Vec<View> {
    indices
        .iter()
        .map(|&i| {
            let mut v = View::from_bytes(data.shape(), data.image(i));
            normalize_in_place(&mut v, stats);
            v
        })
        .collect()
}

/// Top-k accuracies and mean loss on full, unaugmented images.
pub fn evaluate<D: LabeledImages + ?Sized>(
    model: &mut Model,
    data: &D,
    ks: &[usize],
    stats: &ChannelStats,
    batch_size: usize,
) -> Result<Metrics> {
    if data.is_empty() {
        return invalid!("cannot evaluate on an empty dataset");
    }
    let classes = model.arch().num_categories;
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > classes) {
        return invalid!("top-k values {ks:?} must be non-empty and within [1, {classes}]");
    }
    let mut hits = vec![0.0; ks.len()];
    let mut loss = 0.0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let views = val_views(data, chunk, stats);
        let refs: Vec<&View> = views.iter().collect();
        let logits = model.forward(&batch_views(&refs), Mode::Eval)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
        for (h, a) in hits.iter_mut().zip(topk_accuracy(&logits, &labels, ks)) {
            *h += a * chunk.len() as f64;
        }
        loss += softmax_cross_entropy::<f32>(&logits.data, classes, &labels, 0.0).0;
    }
    let n = data.len() as f64;
    Ok(Metrics {
        topk: ks.iter().copied().zip(hits.into_iter().map(|h| h / n)).collect(),
        mean_loss: loss / n,
        count: data.len(),
    })
}

/// [`train_with`] without a progress callback.
pub fn train<D, V>(model: &mut Model, train_data: &D, val_data: &V, cfg: &TrainConfig) -> Result<TrainLog>
where
    D: LabeledImages + ?Sized,
    V: LabeledImages + ?Sized,
{
    train_with(model, train_data, val_data, cfg, &mut |_| {})
}

/// Train `model` for `cfg.epochs` epochs, evaluating on `val_data` after each.
///
/// The loss of a step is the mean cross-entropy over every augmentation view
/// of every sample in the batch. Data order is reshuffled per epoch from
/// `(seed, epoch)` and each sample's augmentation stream from
/// `(seed, epoch, index)`, so the run is a pure function of its inputs.
pub fn train_with<D, V>(
    model: &mut Model,
    train_data: &D,
    val_data: &V,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainLog>
where
    D: LabeledImages + ?Sized,
    V: LabeledImages + ?Sized,
{
    cfg.validate()?;
    let classes = model.arch().num_categories;
    if train_data.num_categories() != classes || val_data.num_categories() != classes {
        return invalid!(
            "model has {classes} categories, datasets have {} (train) and {} (val)",
            train_data.num_categories(),
            val_data.num_categories()
        );
    }
    if train_data.is_empty() || val_data.is_empty() {
        return invalid!("training and validation data must be non-empty");
    }
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }
    let stats = match cfg.normalization {
        Normalization::Default => ChannelStats::imagenet_default(),
        Normalization::Exact => compute_channel_stats(train_data)?,
    };
    model.set_bn_eval_update(cfg.bn_eval_update);
    let ks = [1, classes.min(5)];
    let mut opt = Sgd::new(model.params().len(), cfg.momentum, cfg.weight_decay);
    let mut grads = vec![0.0f32; model.params().len()];
    let n = train_data.len();
    let steps = n.div_ceil(cfg.batch_size);
    let shape = train_data.shape();

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut derived_rng(cfg.seed, &[tag("shuffle"), epoch as u64]));
        let (mut loss_sum, mut view_count) = (0.0f64, 0usize);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let lr = lr_at(cfg, epoch as f64 + step as f64 / steps as f64)?;
            let mut views: Vec<(View, usize)> = Vec::with_capacity(chunk.len() * cfg.augmentation.views_per_sample());
            for &i in chunk {
                let mut rng = derived_rng(cfg.seed, &[tag("augment"), epoch as u64, i as u64]);
                for mut v in apply_augmentation(shape, train_data.image(i), cfg.augmentation, &mut rng) {
                    normalize_in_place(&mut v, &stats);
                    views.push((v, train_data.label(i)));
                }
            }
            let total = views.len();
            grads.fill(0.0);
            for group in group_by_size(&views) {
                let refs: Vec<&View> = group.iter().map(|&j| &views[j].0).collect();
                let labels: Vec<usize> = group.iter().map(|&j| views[j].1).collect();
                let (logits, trace) = model.forward_traced(batch_views(&refs), Mode::Train)?;
                let (loss, dlogits) = softmax_cross_entropy(&logits.data, classes, &labels, 1.0 / total as f64);
                loss_sum += loss;
                model.backward(&trace, &dlogits, &mut grads);
            }
            view_count += total;
            if !loss_sum.is_finite() {
                return Err(Error::Divergence { epoch, loss: loss_sum });
            }
            opt.step(model, &grads, lr);
        }
        let metrics = evaluate(model, val_data, &ks, &stats, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            lr: lr_at(cfg, epoch as f64)?,
            train_loss: loss_sum / view_count as f64,
            val_top1: metrics.topk[0].1,
            val_top5: metrics.topk[1].1,
        };
        on_epoch(&record);
        log.records.push(record);
    }
    Ok(log)
}

/// Indices of views grouped by spatial size, in order of first appearance.
fn group_by_size(views: &[(View, usize)]) -> Vec<Vec<usize>> {
    let mut sizes: Vec<(usize, usize)> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, (v, _)) in views.iter().enumerate() {
        let key = (v.height, v.width);
        match sizes.iter().position(|&s| s == key) {
            Some(g) => groups[g].push(j),
            None => {
                sizes.push(key);
                groups.push(vec![j]);
            }
        }
    }
    groups
}

/// Number of views one epoch feeds through the network.
pub fn views_per_epoch(samples: usize, augmentation: Augmentation) -> usize {
    samples * augmentation.views_per_sample()
}
