use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution as _, StandardNormal};

use super::head::{head_backward, head_forward, HeadCache};
use super::layers::{
    bn_backward, bn_forward, conv_backward, conv_forward, relu_backward, relu_in_place, BatchMoments, BnCache, BnMode,
    ConvGeom, BN_MOMENTUM,
};
use super::{ArchitectureConfig, ParamEntry, ParamKind, ParamSnapshot, TransferUnit, TransferUnitPartition};
use crate::error::Result;
use crate::invalid;
use crate::rng::{derived_rng, tag};
use crate::tensor::{Scalar, Tensor4};

/// Smallest accepted input side length.
pub const MIN_INPUT_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct ConvLayer {
    geom: ConvGeom,
    weight: usize,
}

#[derive(Debug, Clone)]
struct BnLayer {
    scale: usize,
    shift: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone)]
enum UnitLayers {
    Stem { conv: ConvLayer, bn: BnLayer },
    Block { conv1: ConvLayer, bn1: BnLayer, conv2: ConvLayer, bn2: BnLayer, shortcut: Option<(ConvLayer, BnLayer)> },
    Head { weight: usize, dim: usize, classes: usize },
}

#[derive(Default)]
struct LayoutBuilder {
    entries: Vec<ParamEntry>,
    units: Vec<TransferUnit>,
    offset: usize,
    unit_start: usize,
    entry_start: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, kind: ParamKind, shape: Vec<usize>) -> usize {
        let len = shape.iter().product();
        self.entries.push(ParamEntry { name, kind, shape, offset: self.offset, len, unit: self.units.len() });
        self.offset += len;
        self.entries.len() - 1
    }

    fn conv(&mut self, prefix: &str, geom: ConvGeom) -> ConvLayer {
        let shape = vec![geom.out_c, geom.in_c, geom.kernel, geom.kernel];
        ConvLayer { geom, weight: self.add(alloc::format!("{prefix}.weight"), ParamKind::ConvWeight, shape) }
    }

    fn bn(&mut self, prefix: &str, channels: usize) -> BnLayer {
        let mut add = |suffix: &str, kind| self.add(alloc::format!("{prefix}.{suffix}"), kind, vec![channels]);
        BnLayer {
            scale: add("scale", ParamKind::BnScale),
            shift: add("shift", ParamKind::BnShift),
            mean: add("running_mean", ParamKind::RunningMean),
            var: add("running_var", ParamKind::RunningVar),
        }
    }

    fn close_unit(&mut self, name: String) {
        self.units.push(TransferUnit {
            name,
            range: self.unit_start..self.offset,
            entries: self.entry_start..self.entries.len(),
        });
        self.unit_start = self.offset;
        self.entry_start = self.entries.len();
    }
}

fn layout(arch: &ArchitectureConfig) -> (TransferUnitPartition, Vec<UnitLayers>) {
    let mut b = LayoutBuilder::default();
    let mut layers = Vec::with_capacity(arch.unit_count());
    let stem_width = arch.stage_widths[0];
    let stem = UnitLayers::Stem {
        conv: b.conv("stem.conv", ConvGeom { in_c: 3, out_c: stem_width, kernel: 3, stride: 1, pad: 1 }),
        bn: b.bn("stem.bn", stem_width),
    };
    b.close_unit("stem".to_string());
    layers.push(stem);

    let mut in_c = stem_width;
    for (stage, &width) in arch.stage_widths.iter().enumerate() {
        for block in 0..arch.blocks_per_stage {
            let name = TransferUnitPartition::unit_name(stage, block);
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let conv1 =
                b.conv(&alloc::format!("{name}.conv1"), ConvGeom { in_c, out_c: width, kernel: 3, stride, pad: 1 });
            let bn1 = b.bn(&alloc::format!("{name}.bn1"), width);
            let conv2 = b.conv(
                &alloc::format!("{name}.conv2"),
                ConvGeom { in_c: width, out_c: width, kernel: 3, stride: 1, pad: 1 },
            );
            let bn2 = b.bn(&alloc::format!("{name}.bn2"), width);
            let shortcut = (stride != 1 || in_c != width).then(|| {
                let conv = b.conv(
                    &alloc::format!("{name}.shortcut.conv"),
                    ConvGeom { in_c, out_c: width, kernel: 1, stride, pad: 0 },
                );
                (conv, b.bn(&alloc::format!("{name}.shortcut.bn"), width))
            });
            b.close_unit(name);
            layers.push(UnitLayers::Block { conv1, bn1, conv2, bn2, shortcut });
            in_c = width;
        }
    }

    let dim = arch.feature_dim();
    let weight = b.add("head.weight".to_string(), ParamKind::HeadWeight, vec![arch.num_categories, dim]);
    b.close_unit("head".to_string());
    layers.push(UnitLayers::Head { weight, dim, classes: arch.num_categories });
    (TransferUnitPartition { units: b.units, entries: b.entries }, layers)
}

/// Row-major `[rows, cols]` class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T> Logits<T> {
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[allow(clippy::large_enum_variant)]
enum UnitCache<T> {
    Stem { bn: BnCache<T> },
    Block { bn1: BnCache<T>, a1: Tensor4<T>, bn2: BnCache<T>, short: Option<BnCache<T>> },
}

/// Intermediate values recorded by [`Network::forward_traced`].
pub struct Trace<T> {
    /// `acts[u]` is the input of unit `u`; the last entry feeds the head.
    acts: Vec<Tensor4<T>>,
    caches: Vec<Option<UnitCache<T>>>,
    head: HeadCache<T>,
}

impl<T: Scalar> Trace<T> {
    /// Which ReLU outputs are strictly positive, over every rectifier whose
    /// output the trace kept.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for (u, cache) in self.caches.iter().enumerate() {
            if let Some(UnitCache::Block { a1, .. }) = cache {
                out.extend(a1.data.iter().map(|&v| v > T::zero()));
            }
            out.extend(self.acts[u + 1].data.iter().map(|&v| v > T::zero()));
        }
        out
    }
}

/// A residual CNN over an arena of parameters of type `T`.
#[derive(Debug, Clone)]
pub struct Network<T> {
    arch: ArchitectureConfig,
    partition: TransferUnitPartition,
    layers: Vec<UnitLayers>,
    params: Vec<T>,
    frozen: Vec<bool>,
    bn_eval_update: bool,
}

/// The training-precision model.
pub type Model = Network<f32>;

impl<T: Scalar> Network<T> {
    /// Fresh network with every unit initialized from `seed`.
    pub fn build(arch: &ArchitectureConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let (partition, layers) = layout(arch);
        let mut net = Self {
            arch: arch.clone(),
            params: vec![T::zero(); partition.total_len()],
            frozen: vec![false; partition.len()],
            partition,
            layers,
            bn_eval_update: false,
        };
        for u in 0..net.unit_count() {
            net.init_unit(u, seed);
        }
        Ok(net)
    }

    /// Rebuild from stored parts (checkpoint loading).
    pub fn from_parts(arch: &ArchitectureConfig, params: Vec<T>, frozen: Vec<bool>) -> Result<Self> {
        arch.validate()?;
        let (partition, layers) = layout(arch);
        if params.len() != partition.total_len() {
            return invalid!("architecture needs {} values, got {}", partition.total_len(), params.len());
        }
        if frozen.len() != partition.len() {
            return invalid!("architecture has {} units, got {} frozen flags", partition.len(), frozen.len());
        }
        Ok(Self { arch: arch.clone(), partition, layers, params, frozen, bn_eval_update: false })
    }

    /// The same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            partition: self.partition.clone(),
            layers: self.layers.clone(),
            params: self.params.iter().map(|&v| U::of_f64(v.as_f64())).collect(),
            frozen: self.frozen.clone(),
            bn_eval_update: self.bn_eval_update,
        }
    }

    fn init_unit(&mut self, u: usize, seed: u64) {
        for id in self.partition.units[u].entries.clone() {
            let entry = &self.partition.entries[id];
            let range = entry.range();
            let std = match entry.kind {
                ParamKind::ConvWeight => Some(libm::sqrt(2.0 / entry.shape[1..].iter().product::<usize>() as f64)),
                ParamKind::HeadWeight => Some(libm::sqrt(1.0 / entry.shape[1] as f64)),
                _ => None,
            };
            let fill = match entry.kind {
                ParamKind::BnScale | ParamKind::RunningVar => T::one(),
                _ => T::zero(),
            };
            let slot = &mut self.params[range];
            match std {
                Some(std) => {
                    let mut rng = derived_rng(seed, &[tag("init"), id as u64]);
                    for v in slot {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v = T::of_f64(z * std);
                    }
                }
                None => slot.fill(fill),
            }
        }
    }

    pub fn arch(&self) -> &ArchitectureConfig {
        &self.arch
    }

    pub fn partition(&self) -> &TransferUnitPartition {
        &self.partition
    }

    pub fn unit_count(&self) -> usize {
        self.partition.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, frozen: &[bool]) -> Result<()> {
        if frozen.len() != self.frozen.len() {
            return invalid!("expected {} frozen flags, got {}", self.frozen.len(), frozen.len());
        }
        self.frozen.copy_from_slice(frozen);
        Ok(())
    }

    pub fn bn_eval_update(&self) -> bool {
        self.bn_eval_update
    }

    /// Freeze units `1..=n` (one-based) and unfreeze the rest.
    pub fn freeze_prefix(&mut self, n: usize) -> Result<()> {
        if n > self.unit_count() {
            return invalid!("freeze prefix {n} exceeds unit count {}", self.unit_count());
        }
        for (u, f) in self.frozen.iter_mut().enumerate() {
            *f = u < n;
        }
        Ok(())
    }

    /// Redraw units `n+1..=U` (one-based) from the initializer seeded by
    /// `seed`, including batch-norm affine parameters and running statistics.
    pub fn reinit_suffix(&mut self, n: usize, seed: u64) -> Result<()> {
        if n > self.unit_count() {
            return invalid!("reinit prefix {n} exceeds unit count {}", self.unit_count());
        }
        for u in n..self.unit_count() {
            self.init_unit(u, seed);
        }
        Ok(())
    }

    /// When enabled, eval-mode passes normalize with batch statistics and
    /// update the running statistics of unfrozen layers, like training.
    pub fn set_bn_eval_update(&mut self, enabled: bool) {
        self.bn_eval_update = enabled;
    }

    pub fn snapshot(&self) -> ParamSnapshot {
        ParamSnapshot {
            values: self.params.iter().map(|v| v.as_f64() as f32).collect(),
            unit_ranges: self.partition.units.iter().map(|u| u.range.clone()).collect(),
        }
    }

    fn slice(&self, id: usize) -> &[T] {
        &self.params[self.partition.entries[id].range()]
    }

    fn bn_mode(&self, u: usize, mode: Mode) -> BnMode {
        if self.frozen[u] {
            return BnMode::Running;
        }
        match mode {
            Mode::Train => BnMode::Batch,
            Mode::Eval if self.bn_eval_update => BnMode::Batch,
            Mode::Eval => BnMode::Running,
        }
    }

    fn update_running(&mut self, bn: &BnLayer, moments: Option<BatchMoments>) {
        let Some(moments) = moments else { return };
        let m = BN_MOMENTUM;
        let mean_range = self.partition.entries[bn.mean].range();
        for (r, &b) in self.params[mean_range].iter_mut().zip(&moments.mean) {
            *r = T::of_f64((1.0 - m) * r.as_f64() + m * b);
        }
        let var_range = self.partition.entries[bn.var].range();
        for (r, &b) in self.params[var_range].iter_mut().zip(&moments.var_unbiased) {
            *r = T::of_f64((1.0 - m) * r.as_f64() + m * b);
        }
    }

    fn bn_apply(&mut self, bn: &BnLayer, x: Tensor4<T>, mode: BnMode) -> (Tensor4<T>, BnCache<T>) {
        let (out, cache, moments) =
            bn_forward(x, self.slice(bn.scale), self.slice(bn.shift), self.slice(bn.mean), self.slice(bn.var), mode);
        self.update_running(bn, moments);
        (out, cache)
    }

    fn unit_forward(&mut self, u: usize, x: &Tensor4<T>, mode: Mode) -> (Tensor4<T>, UnitCache<T>) {
        let bn_mode = self.bn_mode(u, mode);
        // Layer descriptors are small; cloning sidesteps borrowing `self` twice.
        match self.layers[u].clone() {
            UnitLayers::Stem { conv, bn } => {
                let c = conv_forward(x, self.slice(conv.weight), &conv.geom);
                let (mut out, bn) = self.bn_apply(&bn, c, bn_mode);
                relu_in_place(&mut out);
                (out, UnitCache::Stem { bn })
            }
            UnitLayers::Block { conv1, bn1, conv2, bn2, shortcut } => {
                let c1 = conv_forward(x, self.slice(conv1.weight), &conv1.geom);
                let (mut a1, bn1) = self.bn_apply(&bn1, c1, bn_mode);
                relu_in_place(&mut a1);
                let c2 = conv_forward(&a1, self.slice(conv2.weight), &conv2.geom);
                let (mut out, bn2) = self.bn_apply(&bn2, c2, bn_mode);
                let short = match shortcut {
                    Some((conv, bn)) => {
                        let cs = conv_forward(x, self.slice(conv.weight), &conv.geom);
                        let (s, cache) = self.bn_apply(&bn, cs, bn_mode);
                        out.data.iter_mut().zip(&s.data).for_each(|(o, &v)| *o += v);
                        Some(cache)
                    }
                    None => {
                        out.data.iter_mut().zip(&x.data).for_each(|(o, &v)| *o += v);
                        None
                    }
                };
                relu_in_place(&mut out);
                (out, UnitCache::Block { bn1, a1, bn2, short })
            }
            UnitLayers::Head { .. } => unreachable!("the head is not a convolutional unit"),
        }
    }

    fn pool(x: &Tensor4<T>) -> Vec<T> {
        let hw = x.h * x.w;
        let inv = T::of_f64(1.0 / hw as f64);
        let mut features = vec![T::zero(); x.n * x.c];
        for c in 0..x.c {
            for b in 0..x.n {
                let s = x.data[(c * x.n + b) * hw..(c * x.n + b + 1) * hw].iter().fold(T::zero(), |a, &v| a + v);
                features[b * x.c + c] = s * inv;
            }
        }
        features
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<()> {
        if x.c != 3 {
            return invalid!("expected 3 input channels, got {}", x.c);
        }
        if x.n == 0 {
            return invalid!("empty batch");
        }
        if x.h < MIN_INPUT_SIZE || x.w < MIN_INPUT_SIZE {
            return invalid!("input {}x{} is below the minimum side {MIN_INPUT_SIZE}", x.h, x.w);
        }
        if x.data.len() != x.c * x.n * x.h * x.w {
            return invalid!("tensor buffer does not match its shape");
        }
        Ok(())
    }

    fn head_logits(&self, features: &[T]) -> (Logits<T>, HeadCache<T>) {
        let UnitLayers::Head { weight, dim, classes } = self.layers[self.unit_count() - 1] else {
            unreachable!("last unit is the head")
        };
        let n = features.len() / dim;
        let (data, cache) = head_forward(features, self.slice(weight), dim, T::of_f64(self.arch.head_temperature));
        (Logits { rows: n, cols: classes, data }, cache)
    }

    /// Class scores for a `[3, n, h, w]` batch.
    ///
    /// `Train` normalizes unfrozen batch-norm layers with batch statistics and
    /// updates their running statistics; `Eval` uses running statistics
    /// unless [`Network::set_bn_eval_update`] is active. Frozen units always
    /// use their stored statistics.
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Logits<T>> {
        self.check_input(x)?;
        let mut act: Option<Tensor4<T>> = None;
        for u in 0..self.unit_count() - 1 {
            let (out, _) = self.unit_forward(u, act.as_ref().unwrap_or(x), mode);
            act = Some(out);
        }
        let features = Self::pool(act.as_ref().unwrap_or(x));
        Ok(self.head_logits(&features).0)
    }

    /// Like [`Network::forward`], recording what [`Network::backward`] needs.
    pub fn forward_traced(&mut self, x: Tensor4<T>, mode: Mode) -> Result<(Logits<T>, Trace<T>)> {
        self.check_input(&x)?;
        let body = self.unit_count() - 1;
        let mut acts = Vec::with_capacity(body + 1);
        let mut caches = Vec::with_capacity(body);
        acts.push(x);
        for u in 0..body {
            let (out, cache) = self.unit_forward(u, &acts[u], mode);
            let needed = self.frozen[..=u].iter().any(|f| !f);
            caches.push(needed.then_some(cache));
            acts.push(out);
        }
        let features = Self::pool(&acts[body]);
        let (logits, head) = self.head_logits(&features);
        Ok((logits, Trace { acts, caches, head }))
    }

    /// Accumulate parameter gradients of the loss into `grads` given
    /// `dlogits`. Frozen units receive nothing; backpropagation stops at the
    /// first trainable unit.
    pub fn backward(&self, trace: &Trace<T>, dlogits: &[T], grads: &mut [T]) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let Some(first) = self.frozen.iter().position(|f| !f) else {
            return;
        };
        let head_unit = self.unit_count() - 1;
        let UnitLayers::Head { weight, .. } = self.layers[head_unit] else { unreachable!() };
        let (dfeat, dweight) = head_backward(&trace.head, dlogits);
        if !self.frozen[head_unit] {
            add_into(&mut grads[self.partition.entries[weight].range()], &dweight);
        }
        if first == head_unit {
            return;
        }
        let last = &trace.acts[head_unit];
        let hw = last.h * last.w;
        let inv = T::of_f64(1.0 / hw as f64);
        let mut dy = Tensor4::zeros(last.c, last.n, last.h, last.w);
        for c in 0..last.c {
            for b in 0..last.n {
                let g = dfeat[b * last.c + c] * inv;
                dy.data[(c * last.n + b) * hw..(c * last.n + b + 1) * hw].fill(g);
            }
        }
        for u in (first..head_unit).rev() {
            let need_dx = u > first;
            match self.unit_backward(u, trace, dy, grads, need_dx) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    fn bn_back(
        &self,
        bn: &BnLayer,
        cache: &BnCache<T>,
        dy: Tensor4<T>,
        grads: &mut [T],
        trainable: bool,
    ) -> Tensor4<T> {
        let (dx, dgamma, dbeta) = bn_backward(cache, self.slice(bn.scale), dy);
        if trainable {
            add_into(&mut grads[self.partition.entries[bn.scale].range()], &dgamma);
            add_into(&mut grads[self.partition.entries[bn.shift].range()], &dbeta);
        }
        dx
    }

    fn conv_back(
        &self,
        conv: &ConvLayer,
        x: &Tensor4<T>,
        dy: &Tensor4<T>,
        grads: &mut [T],
        trainable: bool,
        need_dx: bool,
    ) -> Option<Tensor4<T>> {
        let dw = trainable.then(|| &mut grads[self.partition.entries[conv.weight].range()]);
        conv_backward(x, self.slice(conv.weight), &conv.geom, dy, dw, need_dx)
    }

    fn unit_backward(
        &self,
        u: usize,
        trace: &Trace<T>,
        mut dy: Tensor4<T>,
        grads: &mut [T],
        need_dx: bool,
    ) -> Option<Tensor4<T>> {
        let trainable = !self.frozen[u];
        let x = &trace.acts[u];
        let out = &trace.acts[u + 1];
        let cache = trace.caches[u].as_ref().expect("unit cache recorded for backward");
        relu_backward(&mut dy, out);
        match (&self.layers[u], cache) {
            (UnitLayers::Stem { conv, bn }, UnitCache::Stem { bn: bn_cache }) => {
                let dc = self.bn_back(bn, bn_cache, dy, grads, trainable);
                self.conv_back(conv, x, &dc, grads, trainable, need_dx)
            }
            (
                UnitLayers::Block { conv1, bn1, conv2, bn2, shortcut },
                UnitCache::Block { bn1: c1, a1, bn2: c2, short },
            ) => {
                let dshort = dy.clone();
                let dc2 = self.bn_back(bn2, c2, dy, grads, trainable);
                let mut da1 = self.conv_back(conv2, a1, &dc2, grads, trainable, true).expect("dx requested");
                relu_backward(&mut da1, a1);
                let dc1 = self.bn_back(bn1, c1, da1, grads, trainable);
                let dx = self.conv_back(conv1, x, &dc1, grads, trainable, need_dx);
                let dx_short = match (shortcut, short) {
                    (Some((conv, bn)), Some(cache)) => {
                        let ds = self.bn_back(bn, cache, dshort, grads, trainable);
                        self.conv_back(conv, x, &ds, grads, trainable, need_dx)
                    }
                    _ => need_dx.then_some(dshort),
                };
                match (dx, dx_short) {
                    (Some(mut dx), Some(ds)) => {
                        add_into(&mut dx.data, &ds.data);
                        Some(dx)
                    }
                    _ => None,
                }
            }
            _ => unreachable!("cache kind matches unit kind"),
        }
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ArchitectureConfig {
        ArchitectureConfig { stage_widths: vec![4, 8], blocks_per_stage: 1, num_categories: 3, head_temperature: 0.5 }
    }

    fn batch(n: usize, size: usize, salt: f32) -> Tensor4<f32> {
        let mut t = Tensor4::zeros(3, n, size, size);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = ((i as f32 + salt) * 0.173).sin();
        }
        t
    }

    #[test]
    fn default_partition_has_ten_units() {
        let m = Model::build(&ArchitectureConfig::default(), 0).unwrap();
        assert_eq!(m.unit_count(), 10);
        let names: Vec<&str> = m.partition().units.iter().map(|u| u.name.as_str()).collect();
        assert_eq!(names[0], "stem");
        assert_eq!(names[1], "stage1.block1");
        assert_eq!(names[9], "head");
    }

    #[test]
    fn partition_covers_arena_disjointly() {
        let m = Model::build(&ArchitectureConfig::default(), 0).unwrap();
        let p = m.partition();
        let mut expected = 0;
        for (i, unit) in p.units.iter().enumerate() {
            assert_eq!(unit.range.start, expected);
            let mut cursor = unit.range.start;
            for e in &p.entries[unit.entries.clone()] {
                assert_eq!(e.unit, i);
                assert_eq!(e.offset, cursor);
                cursor += e.len;
            }
            assert_eq!(cursor, unit.range.end);
            expected = unit.range.end;
        }
        assert_eq!(expected, m.params().len());
    }

    #[test]
    fn mixed_input_sizes_share_the_head() {
        let mut m = Model::build(&ArchitectureConfig::default(), 1).unwrap();
        assert_eq!(m.forward(&batch(1, 32, 0.0), Mode::Eval).unwrap().cols, 10);
        let small = m.forward(&batch(8, 16, 1.0), Mode::Eval).unwrap();
        assert_eq!((small.rows, small.cols), (8, 10));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut m = Model::build(&tiny(), 1).unwrap();
        assert!(m.forward(&Tensor4::zeros(1, 2, 16, 16), Mode::Eval).is_err());
        assert!(m.forward(&Tensor4::zeros(3, 2, 8, 8), Mode::Eval).is_err());
    }

    #[test]
    fn eval_is_stateless_and_train_updates_running_stats() {
        let mut m = Model::build(&tiny(), 2).unwrap();
        let before = m.snapshot();
        let a = m.forward(&batch(4, 16, 0.0), Mode::Eval).unwrap();
        let b = m.forward(&batch(4, 16, 0.0), Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.snapshot(), before);
        m.forward(&batch(4, 16, 0.0), Mode::Train).unwrap();
        assert_ne!(m.snapshot(), before);
    }

    #[test]
    fn frozen_units_keep_running_stats_in_train_mode() {
        let mut m = Model::build(&tiny(), 2).unwrap();
        m.freeze_prefix(2).unwrap();
        let before = m.snapshot();
        m.forward(&batch(4, 16, 0.0), Mode::Train).unwrap();
        let after = m.snapshot();
        assert!(after.unit_eq(&before, 0) && after.unit_eq(&before, 1));
        assert!(!after.unit_eq(&before, 2));
    }

    #[test]
    fn freeze_and_reinit_validate_range() {
        let mut m = Model::build(&tiny(), 0).unwrap();
        let u = m.unit_count();
        assert!(m.freeze_prefix(u + 1).is_err());
        assert!(m.reinit_suffix(u + 1, 0).is_err());
        m.freeze_prefix(u).unwrap();
        assert!(m.frozen().iter().all(|&f| f));
        m.freeze_prefix(0).unwrap();
        assert!(m.frozen().iter().all(|&f| !f));
    }

    #[test]
    fn reinit_suffix_leaves_prefix() {
        let mut m = Model::build(&ArchitectureConfig::default(), 3).unwrap();
        let before = m.snapshot();
        m.reinit_suffix(2, 99).unwrap();
        let after = m.snapshot();
        let changed = after.changed_units(&before);
        // Units 3..U carry random weights and change; units 1-2 do not.
        assert_eq!(changed, (2..10).collect::<Vec<_>>());
        m.reinit_suffix(10, 5).unwrap();
        assert_eq!(m.snapshot(), after);
    }

    #[test]
    fn reinit_resets_running_stats() {
        let mut m = Model::build(&tiny(), 0).unwrap();
        let fresh = m.snapshot();
        m.forward(&batch(4, 16, 0.0), Mode::Train).unwrap();
        m.reinit_suffix(0, 0).unwrap();
        assert_eq!(m.snapshot(), fresh);
    }

    #[test]
    fn build_is_deterministic() {
        let a = Model::build(&ArchitectureConfig::default(), 11).unwrap().snapshot();
        let b = Model::build(&ArchitectureConfig::default(), 11).unwrap().snapshot();
        assert_eq!(a, b);
    }
}
