use alloc::vec::Vec;

use crate::error::Result;
use crate::invalid;
use crate::model::Logits;

/// Whether `label` ranks within the top `k` of `scores`. Ties rank the lower
/// class index first.
pub fn topk_hit(scores: &[f32], label: usize, k: usize) -> bool {
    let target = scores[label];
    let rank = scores.iter().enumerate().filter(|&(j, &s)| s > target || (s == target && j < label)).count();
    rank < k
}

/// Top-k accuracy for each `k` in `ks`.
pub fn topk_accuracy(logits: &Logits<f32>, labels: &[usize], ks: &[usize]) -> Vec<f64> {
    ks.iter()
        .map(|&k| {
            let hits = (0..logits.rows).filter(|&i| topk_hit(logits.row(i), labels[i], k)).count();
            hits as f64 / logits.rows.max(1) as f64
        })
        .collect()
}

/// Evaluation result: `(k, accuracy)` pairs and the mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub topk: Vec<(usize, f64)>,
    pub mean_loss: f64,
    pub count: usize,
}

impl Metrics {
    pub fn top(&self, k: usize) -> Option<f64> {
        self.topk.iter().find(|(kk, _)| *kk == k).map(|&(_, a)| a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    /// Zero-based epoch index.
    pub epoch: usize,
    /// Learning rate at the start of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub val_top1: f64,
    pub val_top5: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

/// Mean and population standard deviation of the last `k` epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SummaryStats {
    pub k: usize,
    pub top1_mean: f64,
    pub top1_std: f64,
    pub top5_mean: f64,
    pub top5_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    // Constant windows must give exactly zero, so skip the sqrt when possible.
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

pub fn aggregate_last_k(log: &TrainLog, k: usize) -> Result<SummaryStats> {
    if k == 0 || k > log.records.len() {
        return invalid!("window {k} outside [1, {}]", log.records.len());
    }
    let window = &log.records[log.records.len() - k..];
    let top1: Vec<f64> = window.iter().map(|r| r.val_top1).collect();
    let top5: Vec<f64> = window.iter().map(|r| r.val_top5).collect();
    let (top1_mean, top1_std) = mean_std(&top1);
    let (top5_mean, top5_std) = mean_std(&top5);
    Ok(SummaryStats { k, top1_mean, top1_std, top5_mean, top5_std })
}
