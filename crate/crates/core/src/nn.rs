//! Parameter storage, forward contexts and the layer building blocks shared by
//! the four networks.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::tensor::{Real, Tensor};

/// Named trainable tensors plus non-trainable buffers (normalization stats).
///
/// Iteration order is the lexicographic name order, which keeps optimizer
/// updates and checkpoints deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Tensor<T>>,
    buffers: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new(), buffers: BTreeMap::new() }
    }

    pub fn insert_param(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.params.insert(name.into(), t);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.buffers.insert(name.into(), t);
    }

    pub fn param(&self, name: &str) -> Result<&Tensor<T>> {
        self.params.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn buffer(&self, name: &str) -> Result<&Tensor<T>> {
        self.buffers.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn buffer_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.buffers.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.params.iter()
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.buffers.iter()
    }

    /// Parameter names starting with `prefix`, in store order.
    pub fn names_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.params.keys().filter(|k| k.starts_with(prefix)).cloned().collect()
    }

    /// Parameters and buffers, sorted by name.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut all: Vec<(String, &Tensor<T>)> = self
            .params
            .iter()
            .chain(self.buffers.iter())
            .map(|(k, v)| (k.clone(), v))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all
    }

    pub fn is_buffer(&self, name: &str) -> bool {
        self.buffers.contains_key(name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().chain(self.buffers.values()).all(Tensor::all_finite)
    }

    /// Squared L2 distance between the parameters under `prefix` in two stores.
    pub fn distance_sq(&self, other: &Self, prefix: &str) -> f64 {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| {
                let o = &other.params[k];
                v.data().iter().zip(o.data()).map(|(a, b)| num_traits::Float::powi(a.as_f64() - b.as_f64(), 2)).sum::<f64>()
            })
            .sum()
    }
}

/// Whether normalization layers use batch statistics or running averages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Batch statistics observed by a normalization layer during a training pass.
#[derive(Clone, Debug)]
pub struct NormStats<T> {
    pub layer: String,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// One forward (and backward) computation over a parameter store.
pub struct Ctx<'a, T: Real> {
    pub graph: Graph<T>,
    store: &'a ParamStore<T>,
    mode: Mode,
    tracked: Vec<String>,
    vars: BTreeMap<String, Var>,
    stats: Vec<NormStats<T>>,
}

impl<'a, T: Real> Ctx<'a, T> {
    /// `tracked` lists the parameter-name prefixes that become differentiable
    /// leaves; every other parameter enters the graph as a constant.
    pub fn new(store: &'a ParamStore<T>, mode: Mode, tracked: &[&str]) -> Self {
        Self {
            graph: Graph::new(),
            store,
            mode,
            tracked: tracked.iter().map(|s| s.to_string()).collect(),
            vars: BTreeMap::new(),
            stats: Vec::new(),
        }
    }

    pub fn inference(store: &'a ParamStore<T>) -> Self {
        Self::new(store, Mode::Eval, &[])
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Graph node of a parameter; repeated uses share one node, so gradients
    /// from every use accumulate.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(v) = self.vars.get(name) {
            return Ok(*v);
        }
        let t = self.store.param(name)?.clone();
        let v = if self.tracked.iter().any(|p| name.starts_with(p.as_str())) {
            self.graph.leaf(t)
        } else {
            self.graph.constant(t)
        };
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Tracked parameters that were used, with their graph nodes.
    pub fn tracked_params(&self) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(_, v)| self.graph.requires_grad(**v))
            .map(|(k, v)| (k.clone(), *v))
            .collect()
    }

    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.graph.constant(t)
    }

    pub fn take_stats(&mut self) -> Vec<NormStats<T>> {
        core::mem::take(&mut self.stats)
    }

    pub fn discard_stats(&mut self) {
        self.stats.clear();
    }
}

fn normal_tensor<T: Real, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::from_f64(dist.sample(rng)))
}

/// Kind of a layer, exposed for architecture introspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Deconv,
    Linear,
    BatchNorm,
    LayerNorm,
    Relu,
    LeakyRelu,
    Tanh,
    Residual,
    GlobalPool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
}

fn info(name: &str, kind: LayerKind) -> LayerInfo {
    LayerInfo { name: name.to_string(), kind }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub geom: ConvGeom,
    pub bias: bool,
}

impl Conv2d {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            name: name.into(),
            in_channels: cin,
            out_channels: cout,
            kernel: (k, k),
            geom: ConvGeom { stride, pad },
            bias: true,
        }
    }

    pub fn without_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn with_kernel(mut self, kh: usize, kw: usize) -> Self {
        self.kernel = (kh, kw);
        self
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, std: f64, rng: &mut R) {
        let shape = [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1];
        store.insert_param(alloc::format!("{}.weight", self.name), normal_tensor(&shape, std, rng));
        if self.bias {
            store.insert_param(alloc::format!("{}.bias", self.name), Tensor::zeros(&[1, self.out_channels, 1, 1]));
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(&alloc::format!("{}.weight", self.name))?;
        let y = ctx.graph.conv2d(x, w, self.geom)?;
        if self.bias {
            let b = ctx.param(&alloc::format!("{}.bias", self.name))?;
            Ok(ctx.graph.add(y, b))
        } else {
            Ok(y)
        }
    }

    pub fn describe(&self) -> LayerInfo {
        info(&self.name, LayerKind::Conv)
    }
}

/// Transposed convolution; output size is `(in - 1) * stride - 2 * pad + k`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub geom: ConvGeom,
}

impl ConvTranspose2d {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self { name: name.into(), in_channels: cin, out_channels: cout, kernel: k, geom: ConvGeom { stride, pad } }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, std: f64, rng: &mut R) {
        let shape = [self.in_channels, self.out_channels, self.kernel, self.kernel];
        store.insert_param(alloc::format!("{}.weight", self.name), normal_tensor(&shape, std, rng));
        store.insert_param(alloc::format!("{}.bias", self.name), Tensor::zeros(&[1, self.out_channels, 1, 1]));
    }

    pub fn output_dim(&self, input: usize) -> usize {
        (input - 1) * self.geom.stride + self.kernel - 2 * self.geom.pad
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let s = ctx.graph.shape(x).to_vec();
        let out = (self.output_dim(s[2]), self.output_dim(s[3]));
        let w = ctx.param(&alloc::format!("{}.weight", self.name))?;
        let b = ctx.param(&alloc::format!("{}.bias", self.name))?;
        let y = ctx.graph.conv_transpose2d(x, w, self.geom, out)?;
        Ok(ctx.graph.add(y, b))
    }

    pub fn describe(&self) -> LayerInfo {
        info(&self.name, LayerKind::Deconv)
    }
}

/// Fully connected layer; weight stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, din: usize, dout: usize) -> Self {
        Self { name: name.into(), in_features: din, out_features: dout }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, std: f64, rng: &mut R) {
        store.insert_param(
            alloc::format!("{}.weight", self.name),
            normal_tensor(&[self.in_features, self.out_features], std, rng),
        );
        store.insert_param(alloc::format!("{}.bias", self.name), Tensor::zeros(&[1, self.out_features]));
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(&alloc::format!("{}.weight", self.name))?;
        let b = ctx.param(&alloc::format!("{}.bias", self.name))?;
        let y = ctx.graph.matmul(x, w);
        Ok(ctx.graph.add(y, b))
    }

    pub fn describe(&self) -> LayerInfo {
        info(&self.name, LayerKind::Linear)
    }
}

/// Per-channel batch normalization with running statistics.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub name: String,
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm2d {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self { name: name.into(), channels, eps: 1e-5, momentum: 0.1 }
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>) {
        let c = [1, self.channels, 1, 1];
        store.insert_param(alloc::format!("{}.gamma", self.name), Tensor::ones(&c));
        store.insert_param(alloc::format!("{}.beta", self.name), Tensor::zeros(&c));
        store.insert_buffer(alloc::format!("{}.running_mean", self.name), Tensor::zeros(&c));
        store.insert_buffer(alloc::format!("{}.running_var", self.name), Tensor::ones(&c));
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(&alloc::format!("{}.gamma", self.name))?;
        let beta = ctx.param(&alloc::format!("{}.beta", self.name))?;
        let shape = ctx.graph.shape(x).to_vec();
        let c = [1, self.channels, 1, 1];
        match ctx.mode {
            Mode::Train => {
                let count = (shape[0] * shape[2] * shape[3]) as f64;
                let g = &mut ctx.graph;
                let s = g.sum_to(x, &c);
                let mean = g.scale(s, 1.0 / count);
                let xc = g.sub(x, mean);
                let sq = g.square(xc);
                let vs = g.sum_to(sq, &c);
                let var = g.scale(vs, 1.0 / count);
                let ve = g.offset(var, self.eps);
                let inv = g.powf(ve, -0.5);
                let xn = g.mul(xc, inv);
                let y = g.mul(xn, gamma);
                let y = g.add(y, beta);
                let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
                let var_u: Vec<T> = g.value(var).data().iter().map(|v| *v * T::from_f64(unbias)).collect();
                ctx.stats.push(NormStats {
                    layer: self.name.clone(),
                    mean: g.value(mean).data().to_vec(),
                    var: var_u,
                });
                Ok(y)
            }
            Mode::Eval => {
                let rm = ctx.store.buffer(&alloc::format!("{}.running_mean", self.name))?.clone();
                let rv = ctx.store.buffer(&alloc::format!("{}.running_var", self.name))?.clone();
                let g = &mut ctx.graph;
                let rm = g.constant(rm);
                let rv = g.constant(rv);
                let ve = g.offset(rv, self.eps);
                let inv = g.powf(ve, -0.5);
                let xc = g.sub(x, rm);
                let xn = g.mul(xc, inv);
                let y = g.mul(xn, gamma);
                Ok(g.add(y, beta))
            }
        }
    }

    /// Folds batch statistics into the running averages.
    pub fn apply_stats<T: Real>(&self, store: &mut ParamStore<T>, stats: &NormStats<T>) -> Result<()> {
        let m = T::from_f64(self.momentum);
        let keep = T::one() - m;
        let rm = store.buffer_mut(&alloc::format!("{}.running_mean", self.name))?;
        for (r, b) in rm.data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * *b;
        }
        let rv = store.buffer_mut(&alloc::format!("{}.running_var", self.name))?;
        for (r, b) in rv.data_mut().iter_mut().zip(&stats.var) {
            *r = keep * *r + m * *b;
        }
        Ok(())
    }

    pub fn describe(&self) -> LayerInfo {
        info(&self.name, LayerKind::BatchNorm)
    }
}

/// Per-sample normalization over `(C, H, W)` with a per-channel affine.
/// Stateless, so it behaves identically in both modes.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub name: String,
    pub channels: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self { name: name.into(), channels, eps: 1e-5 }
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>) {
        let c = [1, self.channels, 1, 1];
        store.insert_param(alloc::format!("{}.gamma", self.name), Tensor::ones(&c));
        store.insert_param(alloc::format!("{}.beta", self.name), Tensor::zeros(&c));
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(&alloc::format!("{}.gamma", self.name))?;
        let beta = ctx.param(&alloc::format!("{}.beta", self.name))?;
        let shape = ctx.graph.shape(x).to_vec();
        let per = [shape[0], 1, 1, 1];
        let count = (shape[1] * shape[2] * shape[3]) as f64;
        let g = &mut ctx.graph;
        let s = g.sum_to(x, &per);
        let mean = g.scale(s, 1.0 / count);
        let xc = g.sub(x, mean);
        let sq = g.square(xc);
        let vs = g.sum_to(sq, &per);
        let var = g.scale(vs, 1.0 / count);
        let ve = g.offset(var, self.eps);
        let inv = g.powf(ve, -0.5);
        let xn = g.mul(xc, inv);
        let y = g.mul(xn, gamma);
        Ok(g.add(y, beta))
    }

    pub fn describe(&self) -> LayerInfo {
        info(&self.name, LayerKind::LayerNorm)
    }
}

/// `x + BN(conv(ReLU(BN(conv(x)))))`, with a 1×1 projection on the skip path
/// when the channel count changes.
#[derive(Clone, Debug)]
pub struct ResBlock {
    pub name: String,
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    pub fn new(name: &str, cin: usize, cout: usize) -> Self {
        Self {
            name: name.to_string(),
            conv1: Conv2d::new(alloc::format!("{name}.conv1"), cin, cout, 3, 1, 1).without_bias(),
            bn1: BatchNorm2d::new(alloc::format!("{name}.bn1"), cout),
            conv2: Conv2d::new(alloc::format!("{name}.conv2"), cout, cout, 3, 1, 1).without_bias(),
            bn2: BatchNorm2d::new(alloc::format!("{name}.bn2"), cout),
            skip: (cin != cout)
                .then(|| Conv2d::new(alloc::format!("{name}.skip"), cin, cout, 1, 1, 0).without_bias()),
        }
    }

    pub fn init<T: Real, R: Rng + ?Sized>(&self, store: &mut ParamStore<T>, std: f64, rng: &mut R) {
        self.conv1.init(store, std, rng);
        self.bn1.init(store);
        self.conv2.init(store, std, rng);
        self.bn2.init(store);
        if let Some(s) = &self.skip {
            s.init(store, std, rng);
        }
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.graph.relu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let skip = match &self.skip {
            Some(s) => s.forward(ctx, x)?,
            None => x,
        };
        Ok(ctx.graph.add(h, skip))
    }

    pub fn batch_norms(&self) -> [&BatchNorm2d; 2] {
        [&self.bn1, &self.bn2]
    }

    pub fn describe(&self) -> Vec<LayerInfo> {
        let mut v = vec![
            info(&self.name, LayerKind::Residual),
            self.conv1.describe(),
            self.bn1.describe(),
            info(&alloc::format!("{}.relu", self.name), LayerKind::Relu),
            self.conv2.describe(),
            self.bn2.describe(),
        ];
        if let Some(s) = &self.skip {
            v.push(s.describe());
        }
        v
    }
}

/// `x` clamped to `[lo, hi]`; gradient passes only inside the interval.
pub fn clamp<T: Real>(g: &mut Graph<T>, x: Var, lo: f64, hi: f64) -> Var {
    let over = g.offset(x, -hi);
    let over = g.relu(over);
    let under = g.neg(x);
    let under = g.offset(under, lo);
    let under = g.relu(under);
    let y = g.sub(x, over);
    g.add(y, under)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_norm_normalizes_in_train_mode() {
        let mut store = ParamStore::<f64>::new();
        let bn = BatchNorm2d::new("bn", 2);
        bn.init(&mut store);
        let mut ctx = Ctx::new(&store, Mode::Train, &[]);
        let x = ctx.input(Tensor::from_fn(&[3, 2, 2, 2], |i| (i * i) as f64 * 0.1));
        let y = bn.forward(&mut ctx, x).unwrap();
        let v = ctx.graph.value(y).clone();
        for c in 0..2 {
            let vals: Vec<f64> =
                (0..3).flat_map(|n| (0..4).map(move |p| (n, p))).map(|(n, p)| v.data()[(n * 2 + c) * 4 + p]).collect();
            let mean: f64 = vals.iter().sum::<f64>() / 12.0;
            let var: f64 = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 12.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
        let stats = ctx.take_stats();
        assert_eq!(stats.len(), 1);
        bn.apply_stats(&mut store, &stats[0]).unwrap();
        let rm = store.buffer("bn.running_mean").unwrap();
        assert!((rm.data()[0] - 0.1 * stats[0].mean[0]).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_is_per_sample() {
        let mut store = ParamStore::<f64>::new();
        let ln = LayerNorm::new("ln", 2);
        ln.init(&mut store);
        let mut ctx = Ctx::new(&store, Mode::Train, &[]);
        let a = Tensor::from_fn(&[1, 2, 2, 2], |i| i as f64);
        let mut both = a.data().to_vec();
        both.extend((0..8).map(|i| (i as f64).sin() * 5.0));
        let x1 = ctx.input(a);
        let x2 = ctx.input(Tensor::from_vec(&[2, 2, 2, 2], both).unwrap());
        let y1 = ln.forward(&mut ctx, x1).unwrap();
        let y2 = ln.forward(&mut ctx, x2).unwrap();
        let (v1, v2) = (ctx.graph.value(y1).data().to_vec(), ctx.graph.value(y2).data()[..8].to_vec());
        assert_eq!(v1, v2);
        assert!(ctx.take_stats().is_empty());
    }

    #[test]
    fn shared_parameter_gradients_accumulate() {
        let mut store = ParamStore::<f64>::new();
        let lin = Linear::new("lin", 2, 1);
        lin.init(&mut store, 0.5, &mut ChaCha8Rng::seed_from_u64(0));
        let mut ctx = Ctx::new(&store, Mode::Train, &["lin."]);
        let x = ctx.input(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap());
        let a = lin.forward(&mut ctx, x).unwrap();
        let b = lin.forward(&mut ctx, x).unwrap();
        let s = ctx.graph.add(a, b);
        let s = ctx.graph.sum_all(s);
        let tracked = ctx.tracked_params();
        assert_eq!(tracked.len(), 2);
        let vars: Vec<Var> = tracked.iter().map(|(_, v)| *v).collect();
        let grads = ctx.graph.grad(s, &vars);
        let gb = ctx.graph.value(grads[0].unwrap()).data().to_vec();
        let gw = ctx.graph.value(grads[1].unwrap()).data().to_vec();
        assert_eq!(tracked[0].0, "lin.bias");
        assert_eq!(gb, vec![2.0]);
        assert_eq!(gw, vec![2.0, 4.0]);
    }

    #[test]
    fn clamp_limits_values() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::from_vec(&[4], vec![-20.0, -3.0, 4.0, 15.0]).unwrap());
        let y = clamp(&mut g, x, -10.0, 10.0);
        assert_eq!(g.value(y).data(), &[-10.0, -3.0, 4.0, 10.0]);
        let s = g.sum_all(y);
        let gx = g.grad(s, &[x])[0].unwrap();
        assert_eq!(g.value(gx).data(), &[0.0, 1.0, 1.0, 0.0]);
    }
}
