//! Central finite-difference check of the analytic gradients.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::invalid;
use crate::model::head::softmax_cross_entropy;
use crate::model::{Mode, Model, Network};
use crate::tensor::Tensor4;

pub const STEP: f64 = 1e-5;
/// A probe whose two sides disagree on some ReLU sign is retried with a step
/// ten times smaller, at most this many times.
pub const KINK_RETRIES: usize = 3;
pub const DENOMINATOR_GUARD: f64 = 1e-8;
pub const MAX_PARAMS: usize = 5_000;
pub const MAX_BATCH: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Arena index of the worst parameter.
    pub worst_index: usize,
    pub checked: usize,
    /// Parameters left out because every probe step straddled a ReLU kink,
    /// where the loss has no derivative.
    pub kinks: usize,
}

fn mean_loss(net: &Network<f64>, x: &Tensor4<f64>, labels: &[usize], mode: Mode) -> Result<(f64, Vec<bool>)> {
    // Batch-statistics passes mutate running stats; evaluate on a copy.
    let mut net = net.clone();
    let (logits, trace) = net.forward_traced(x.clone(), mode)?;
    let loss = softmax_cross_entropy(&logits.data, logits.cols, labels, 0.0).0 / labels.len() as f64;
    Ok((loss, trace.relu_pattern()))
}

/// Central difference at `i`, or `None` when every step tried crosses a kink.
fn probe(net: &mut Network<f64>, i: usize, x: &Tensor4<f64>, labels: &[usize], mode: Mode) -> Result<Option<f64>> {
    let original = net.params()[i];
    let mut step = STEP;
    for _ in 0..=KINK_RETRIES {
        net.params_mut()[i] = original + step;
        let (plus, plus_pattern) = mean_loss(net, x, labels, mode)?;
        net.params_mut()[i] = original - step;
        let (minus, minus_pattern) = mean_loss(net, x, labels, mode)?;
        net.params_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        if !numeric.is_finite() {
            return Err(Error::Divergence { epoch: 0, loss: numeric });
        }
        if plus_pattern == minus_pattern {
            return Ok(Some(numeric));
        }
        step /= 10.0;
    }
    Ok(None)
}

/// Compare analytic gradients of the mean cross-entropy against central
/// differences on every trainable parameter of every unfrozen unit, in
/// 64-bit precision. `mode` selects batch statistics (`Train`) or running
/// statistics (`Eval`) in the batch-norm layers.
pub fn gradient_check(model: &Model, batch: &Tensor4<f32>, labels: &[usize], mode: Mode) -> Result<GradCheck> {
    let trainable: Vec<usize> =
        model.partition().entries.iter().filter(|e| e.kind.is_trainable()).flat_map(|e| e.range()).collect();
    if trainable.len() > MAX_PARAMS {
        return invalid!("gradient check needs a tiny model (<= {MAX_PARAMS} parameters), got {}", trainable.len());
    }
    if batch.n == 0 || batch.n > MAX_BATCH || labels.len() != batch.n {
        return invalid!("gradient check needs 1..={MAX_BATCH} samples with one label each");
    }
    let net: Network<f64> = model.cast();
    let x: Tensor4<f64> = batch.cast();

    let mut analytic_net = net.clone();
    let (logits, trace) = analytic_net.forward_traced(x.clone(), mode)?;
    let (_, dlogits) = softmax_cross_entropy(&logits.data, logits.cols, labels, 1.0 / labels.len() as f64);
    let mut grads = vec![0.0f64; net.params().len()];
    analytic_net.backward(&trace, &dlogits, &mut grads);
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { epoch: 0, loss: f64::NAN });
    }

    let frozen = model.frozen();
    let mut worst = GradCheck { max_rel_error: 0.0, worst_index: 0, checked: 0, kinks: 0 };
    let mut net_probe = net.clone();
    for e in model.partition().entries.iter().filter(|e| e.kind.is_trainable() && !frozen[e.unit]) {
        for i in e.range() {
            let Some(numeric) = probe(&mut net_probe, i, &x, labels, mode)? else {
                worst.kinks += 1;
                continue;
            };
            let analytic = grads[i];
            let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_GUARD);
            let rel = (analytic - numeric).abs() / denom;
            worst.checked += 1;
            if rel > worst.max_rel_error {
                worst.max_rel_error = rel;
                worst.worst_index = i;
            }
        }
    }
    Ok(worst)
}
