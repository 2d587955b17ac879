//! Temperature-scaled cosine classifier and softmax cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Scalar;

/// Floor applied to feature and weight-row norms.
pub const NORM_EPSILON: f64 = 1e-12;

fn norms_and_units<T: Scalar>(rows: &[T], dim: usize) -> (Vec<T>, Vec<T>) {
    let eps = T::of_f64(NORM_EPSILON);
    let mut norms = Vec::with_capacity(rows.len() / dim.max(1));
    let mut units = vec![T::zero(); rows.len()];
    for (row, unit) in rows.chunks_exact(dim).zip(units.chunks_exact_mut(dim)) {
        let sq = row.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let norm = sq.sqrt().max(eps);
        for (u, &v) in unit.iter_mut().zip(row) {
            *u = v / norm;
        }
        norms.push(norm);
    }
    (norms, units)
}

/// `logit[i][k] = <f_i / |f_i|, w_k / |w_k|> / tau` for `features`
/// `[n, dim]` and `weights` `[classes, dim]`, row-major.
pub fn cosine_head<T: Scalar>(features: &[T], weights: &[T], dim: usize, tau: T) -> Vec<T> {
    head_forward(features, weights, dim, tau).0
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    dim: usize,
    feature_norms: Vec<T>,
    feature_units: Vec<T>,
    weight_norms: Vec<T>,
    weight_units: Vec<T>,
    tau: T,
}

pub fn head_forward<T: Scalar>(features: &[T], weights: &[T], dim: usize, tau: T) -> (Vec<T>, HeadCache<T>) {
    let (feature_norms, feature_units) = norms_and_units(features, dim);
    let (weight_norms, weight_units) = norms_and_units(weights, dim);
    let n = feature_norms.len();
    let classes = weight_norms.len();
    let mut logits = vec![T::zero(); n * classes];
    T::gemm(
        n,
        dim,
        classes,
        T::one() / tau,
        (&feature_units, dim as isize, 1),
        (&weight_units, 1, dim as isize),
        T::zero(),
        (&mut logits, classes as isize, 1),
    );
    (logits, HeadCache { dim, feature_norms, feature_units, weight_norms, weight_units, tau })
}

/// Chain rule through `v / max(|v|, eps)`.
fn unnormalize_grad<T: Scalar>(d_units: &mut [T], units: &[T], norms: &[T], dim: usize) {
    let eps = T::of_f64(NORM_EPSILON);
    for ((d, u), &norm) in d_units.chunks_exact_mut(dim).zip(units.chunks_exact(dim)).zip(norms) {
        if norm > eps {
            let proj = d.iter().zip(u).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            for (di, &ui) in d.iter_mut().zip(u) {
                *di = (*di - ui * proj) / norm;
            }
        } else {
            d.iter_mut().for_each(|di| *di /= norm);
        }
    }
}

/// Returns `(dfeatures, dweights)`.
pub fn head_backward<T: Scalar>(cache: &HeadCache<T>, dlogits: &[T]) -> (Vec<T>, Vec<T>) {
    let dim = cache.dim;
    let n = cache.feature_norms.len();
    let classes = cache.weight_norms.len();
    let inv_tau = T::one() / cache.tau;
    let mut dfeat = vec![T::zero(); n * dim];
    let mut dweight = vec![T::zero(); classes * dim];
    // dF_unit = G * W_unit / tau
    T::gemm(
        n,
        classes,
        dim,
        inv_tau,
        (dlogits, classes as isize, 1),
        (&cache.weight_units, dim as isize, 1),
        T::zero(),
        (&mut dfeat, dim as isize, 1),
    );
    // dW_unit = G^T * F_unit / tau
    T::gemm(
        classes,
        n,
        dim,
        inv_tau,
        (dlogits, 1, classes as isize),
        (&cache.feature_units, dim as isize, 1),
        T::zero(),
        (&mut dweight, dim as isize, 1),
    );
    unnormalize_grad(&mut dfeat, &cache.feature_units, &cache.feature_norms, dim);
    unnormalize_grad(&mut dweight, &cache.weight_units, &cache.weight_norms, dim);
    (dfeat, dweight)
}

/// Summed cross-entropy over rows and `scale * (softmax - onehot)`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], classes: usize, labels: &[usize], scale: f64) -> (f64, Vec<T>) {
    let mut total = 0.0;
    let mut grad = vec![T::zero(); logits.len()];
    for ((row, g), &label) in logits.chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| libm::exp(v.as_f64() - max)).collect();
        let z: f64 = exps.iter().sum();
        total += libm::log(z) + max - row[label].as_f64();
        for (k, (gk, e)) in g.iter_mut().zip(&exps).enumerate() {
            let p = e / z - if k == label { 1.0 } else { 0.0 };
            *gk = T::of_f64(p * scale);
        }
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argmax(row: &[f64]) -> usize {
        row.iter().enumerate().fold(0, |best, (i, &v)| if v > row[best] { i } else { best })
    }

    #[test]
    fn feature_scaling_is_invisible() {
        let f = [0.3, -1.2, 0.7, 2.0, 0.1, -0.4];
        let w = [1.0, 0.0, 0.5, -0.2, 0.3, 0.9, 0.0, 1.0, -1.0];
        let base = cosine_head(&f, &w, 3, 0.1);
        let scaled: Vec<f64> = f.iter().map(|v| v * 37.5).collect();
        for (a, b) in base.iter().zip(cosine_head(&scaled, &w, 3, 0.1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn aligned_feature_hits_the_unit_bound() {
        let w = [0.6, 0.8, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let logits = cosine_head(&[0.6f64, 0.8, 0.0], &w, 3, 1.0);
        assert!((logits[0] - 1.0).abs() < 1e-15);
        assert_eq!(argmax(&logits), 0);
    }

    #[test]
    fn halving_tau_doubles_logits() {
        let f = [0.3f64, -1.2, 0.7];
        let w = [1.0, 0.0, 0.5, -0.2, 0.3, 0.9];
        let a = cosine_head(&f, &w, 3, 0.2);
        let b = cosine_head(&f, &w, 3, 0.1);
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
        assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn zero_features_stay_finite() {
        let logits = cosine_head(&[0.0f64, 0.0], &[0.0, 0.0, 1.0, 0.0], 2, 0.1);
        assert!(logits.iter().all(|v| v.is_finite()));
        let (_, cache) = head_forward(&[0.0f64, 0.0], &[0.0, 0.0, 1.0, 0.0], 2, 0.1);
        let (df, dw) = head_backward(&cache, &[1.0, -1.0]);
        assert!(df.iter().chain(&dw).all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64; 4], 4, &[2], 1.0);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad[2] + 0.75).abs() < 1e-12);
        assert!((grad[0] - 0.25).abs() < 1e-12);
    }
}
