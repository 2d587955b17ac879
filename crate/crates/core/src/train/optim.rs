use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::model::Model;

/// SGD with momentum and decoupled-from-momentum weight decay:
/// `v <- m v + g`, `p <- p - lr (v + wd p)`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<f32>,
}

impl Sgd {
    pub fn new(len: usize, momentum: f64, weight_decay: f64) -> Self {
        Self { momentum: momentum as f32, weight_decay: weight_decay as f32, velocity: vec![0.0; len] }
    }

    pub fn velocity(&self) -> &[f32] {
        &self.velocity
    }

    /// Update one contiguous parameter range.
    pub fn update(&mut self, range: Range<usize>, params: &mut [f32], grads: &[f32], lr: f64, decay: bool) {
        let (m, lr) = (self.momentum, lr as f32);
        let wd = if decay { self.weight_decay } else { 0.0 };
        for i in range {
            let v = m * self.velocity[i] + grads[i];
            self.velocity[i] = v;
            params[i] -= lr * (v + wd * params[i]);
        }
    }

    /// Update every trainable entry of every unfrozen unit.
    pub fn step(&mut self, model: &mut Model, grads: &[f32], lr: f64) {
        let updates: Vec<(Range<usize>, bool)> = model
            .partition()
            .entries
            .iter()
            .filter(|e| e.kind.is_trainable() && !model.frozen()[e.unit])
            .map(|e| (e.range(), e.kind.decays()))
            .collect();
        let params = model.params_mut();
        for (range, decay) in updates {
            self.update(range, params, grads, lr, decay);
        }
    }
}
