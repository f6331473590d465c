//! The four networks: content encoder, variational attribute encoder,
//! label-conditioned generator and the two-headed critic.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Var;
use crate::label::{LabelSchema, LabelVector};
use crate::nn::{
    clamp, BatchNorm2d, Conv2d, ConvTranspose2d, Ctx, LayerInfo, LayerKind, LayerNorm, Linear, NormStats,
    ParamStore, ResBlock,
};
use crate::tensor::{Real, Tensor};

pub const CONTENT_PREFIX: &str = "content.";
pub const ATTRIBUTE_PREFIX: &str = "attribute.";
pub const GENERATOR_PREFIX: &str = "generator.";
pub const CRITIC_PREFIX: &str = "critic.";

/// Bounds applied to the attribute encoder's log-variance before use.
pub const LOG_VARIANCE_BOUNDS: (f64, f64) = (-10.0, 10.0);

/// Architecture hyperparameters. Defaults describe the 128×128 setup with a
/// 256-channel content map and a 16-dimensional attribute code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub image_height: usize,
    pub image_width: usize,
    /// Width of the first downsampling convolution of both encoders.
    pub encoder_base_channels: usize,
    pub content_channels: usize,
    pub attribute_dim: usize,
    pub content_res_blocks: usize,
    pub attribute_res_blocks: usize,
    pub generator_res_blocks: usize,
    pub critic_base_channels: usize,
    /// Number of stride-2 convolutions in the critic trunk.
    pub critic_layers: usize,
    pub critic_leaky_slope: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_height: 128,
            image_width: 128,
            encoder_base_channels: 64,
            content_channels: 256,
            attribute_dim: 16,
            content_res_blocks: 3,
            attribute_res_blocks: 3,
            generator_res_blocks: 6,
            critic_base_channels: 64,
            critic_layers: 6,
            critic_leaky_slope: 0.01,
            init_std: 0.02,
        }
    }
}

impl ModelConfig {
    /// Small widths for the 32×32 synthetic shapes dataset.
    pub fn desk(image_height: usize, image_width: usize) -> Self {
        Self {
            image_height,
            image_width,
            encoder_base_channels: 16,
            content_channels: 32,
            critic_base_channels: 16,
            critic_layers: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_height == 0 || self.image_width == 0 || self.image_height % 4 != 0 || self.image_width % 4 != 0 {
            return Err(Error::Config(alloc::format!(
                "image size {}x{} must be a positive multiple of 4",
                self.image_height,
                self.image_width
            )));
        }
        let div = 1usize << self.critic_layers;
        if self.critic_layers == 0 || self.image_height % div != 0 || self.image_width % div != 0 {
            return Err(Error::Config(alloc::format!(
                "critic with {} stride-2 layers needs image dims divisible by {div}",
                self.critic_layers
            )));
        }
        if self.attribute_dim == 0 || self.content_channels == 0 || self.encoder_base_channels == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn content_shape(&self) -> [usize; 3] {
        [self.content_channels, self.image_height / 4, self.image_width / 4]
    }
}

/// Two stride-2 convolutions (BN + ReLU) followed by residual blocks.
#[derive(Clone, Debug)]
pub struct ContentEncoder {
    down1: Conv2d,
    bn1: BatchNorm2d,
    down2: Conv2d,
    bn2: BatchNorm2d,
    blocks: Vec<ResBlock>,
}

impl ContentEncoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let p = "content";
        let b = cfg.encoder_base_channels;
        let c = cfg.content_channels;
        Self {
            down1: Conv2d::new(alloc::format!("{p}.down1"), 3, b, 4, 2, 1).without_bias(),
            bn1: BatchNorm2d::new(alloc::format!("{p}.bn1"), b),
            down2: Conv2d::new(alloc::format!("{p}.down2"), b, c, 4, 2, 1).without_bias(),
            bn2: BatchNorm2d::new(alloc::format!("{p}.bn2"), c),
            blocks: (0..cfg.content_res_blocks).map(|i| ResBlock::new(&alloc::format!("{p}.res{i}"), c, c)).collect(),
        }
    }

    fn init<T: Real, R: Rng + ?Sized>(&self, s: &mut ParamStore<T>, std: f64, rng: &mut R) {
        self.down1.init(s, std, rng);
        self.bn1.init(s);
        self.down2.init(s, std, rng);
        self.bn2.init(s);
        self.blocks.iter().for_each(|b| b.init(s, std, rng));
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.down1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.graph.relu(h);
        let h = self.down2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let mut h = ctx.graph.relu(h);
        for b in &self.blocks {
            h = b.forward(ctx, h)?;
        }
        Ok(h)
    }

    fn batch_norms(&self) -> Vec<&BatchNorm2d> {
        let mut v = vec![&self.bn1, &self.bn2];
        self.blocks.iter().for_each(|b| v.extend(b.batch_norms()));
        v
    }

    pub fn describe(&self) -> Vec<LayerInfo> {
        let mut v = vec![self.down1.describe(), self.bn1.describe(), relu_info("content.relu1")];
        v.extend([self.down2.describe(), self.bn2.describe(), relu_info("content.relu2")]);
        self.blocks.iter().for_each(|b| v.extend(b.describe()));
        v
    }
}

fn relu_info(name: &str) -> LayerInfo {
    LayerInfo { name: name.to_string(), kind: LayerKind::Relu }
}

/// Graph nodes of an attribute code.
#[derive(Clone, Copy, Debug)]
pub struct CodeVars {
    pub mean: Var,
    /// Already clamped to [`LOG_VARIANCE_BOUNDS`].
    pub log_variance: Var,
}

/// Downsampling convolutions, residual blocks, global average pooling and two
/// linear heads for the Gaussian mean and log-variance.
#[derive(Clone, Debug)]
pub struct AttributeEncoder {
    down1: Conv2d,
    bn1: BatchNorm2d,
    down2: Conv2d,
    bn2: BatchNorm2d,
    blocks: Vec<ResBlock>,
    mean: Linear,
    log_variance: Linear,
    width: usize,
}

impl AttributeEncoder {
    pub fn new(cfg: &ModelConfig) -> Self {
        let p = "attribute";
        let b = cfg.encoder_base_channels;
        let w = 2 * b;
        Self {
            down1: Conv2d::new(alloc::format!("{p}.down1"), 3, b, 4, 2, 1).without_bias(),
            bn1: BatchNorm2d::new(alloc::format!("{p}.bn1"), b),
            down2: Conv2d::new(alloc::format!("{p}.down2"), b, w, 4, 2, 1).without_bias(),
            bn2: BatchNorm2d::new(alloc::format!("{p}.bn2"), w),
            blocks: (0..cfg.attribute_res_blocks).map(|i| ResBlock::new(&alloc::format!("{p}.res{i}"), w, w)).collect(),
            mean: Linear::new(alloc::format!("{p}.mean"), w, cfg.attribute_dim),
            log_variance: Linear::new(alloc::format!("{p}.log_variance"), w, cfg.attribute_dim),
            width: w,
        }
    }

    fn init<T: Real, R: Rng + ?Sized>(&self, s: &mut ParamStore<T>, std: f64, rng: &mut R) {
        self.down1.init(s, std, rng);
        self.bn1.init(s);
        self.down2.init(s, std, rng);
        self.bn2.init(s);
        self.blocks.iter().for_each(|b| b.init(s, std, rng));
        self.mean.init(s, std, rng);
        self.log_variance.init(s, std, rng);
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<CodeVars> {
        let h = self.down1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.graph.relu(h);
        let h = self.down2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let mut h = ctx.graph.relu(h);
        for b in &self.blocks {
            h = b.forward(ctx, h)?;
        }
        let s = ctx.graph.shape(h).to_vec();
        let pooled = ctx.graph.sum_to(h, &[s[0], s[1], 1, 1]);
        let pooled = ctx.graph.scale(pooled, 1.0 / (s[2] * s[3]) as f64);
        let pooled = ctx.graph.reshape(pooled, &[s[0], self.width]);
        let mean = self.mean.forward(ctx, pooled)?;
        let lv = self.log_variance.forward(ctx, pooled)?;
        let lv = clamp(&mut ctx.graph, lv, LOG_VARIANCE_BOUNDS.0, LOG_VARIANCE_BOUNDS.1);
        Ok(CodeVars { mean, log_variance: lv })
    }

    fn batch_norms(&self) -> Vec<&BatchNorm2d> {
        let mut v = vec![&self.bn1, &self.bn2];
        self.blocks.iter().for_each(|b| v.extend(b.batch_norms()));
        v
    }

    pub fn describe(&self) -> Vec<LayerInfo> {
        let mut v = vec![self.down1.describe(), self.bn1.describe(), relu_info("attribute.relu1")];
        v.extend([self.down2.describe(), self.bn2.describe(), relu_info("attribute.relu2")]);
        self.blocks.iter().for_each(|b| v.extend(b.describe()));
        v.push(LayerInfo { name: "attribute.pool".into(), kind: LayerKind::GlobalPool });
        v.push(self.mean.describe());
        v.push(self.log_variance.describe());
        v
    }
}

/// Residual blocks over `[content ‖ tiled z ‖ tiled y]`, then two stride-2
/// deconvolutions back to image resolution and a tanh.
#[derive(Clone, Debug)]
pub struct Generator {
    blocks: Vec<ResBlock>,
    up1: ConvTranspose2d,
    bn_up1: BatchNorm2d,
    up2: ConvTranspose2d,
    attribute_dim: usize,
    label_bits: usize,
}

impl Generator {
    pub fn new(cfg: &ModelConfig, label_bits: usize) -> Self {
        let p = "generator";
        let c = cfg.content_channels;
        let cin = c + cfg.attribute_dim + label_bits;
        let half = (c / 2).max(1);
        Self {
            blocks: (0..cfg.generator_res_blocks)
                .map(|i| ResBlock::new(&alloc::format!("{p}.res{i}"), if i == 0 { cin } else { c }, c))
                .collect(),
            up1: ConvTranspose2d::new(alloc::format!("{p}.up1"), c, half, 4, 2, 1),
            bn_up1: BatchNorm2d::new(alloc::format!("{p}.bn_up1"), half),
            up2: ConvTranspose2d::new(alloc::format!("{p}.up2"), half, 3, 4, 2, 1),
            attribute_dim: cfg.attribute_dim,
            label_bits,
        }
    }

    fn init<T: Real, R: Rng + ?Sized>(&self, s: &mut ParamStore<T>, std: f64, rng: &mut R) {
        self.blocks.iter().for_each(|b| b.init(s, std, rng));
        self.up1.init(s, std, rng);
        self.bn_up1.init(s);
        self.up2.init(s, std, rng);
    }

    /// `content: [B,C,h,w]`, `z: [B,d]`, `labels: [B,bits]`.
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, content: Var, z: Var, labels: Var) -> Result<Var> {
        let cs = ctx.graph.shape(content).to_vec();
        let (b, h, w) = (cs[0], cs[2], cs[3]);
        if ctx.graph.shape(z) != [b, self.attribute_dim] {
            return Err(Error::Shape(alloc::format!(
                "attribute code {:?} does not match (B={b}, d={})",
                ctx.graph.shape(z),
                self.attribute_dim
            )));
        }
        if ctx.graph.shape(labels) != [b, self.label_bits] {
            return Err(Error::SchemaMismatch(alloc::format!(
                "label batch {:?} does not match (B={b}, bits={})",
                ctx.graph.shape(labels),
                self.label_bits
            )));
        }
        let g = &mut ctx.graph;
        let zt = g.reshape(z, &[b, self.attribute_dim, 1, 1]);
        let zt = g.broadcast_to(zt, &[b, self.attribute_dim, h, w]);
        let yt = g.reshape(labels, &[b, self.label_bits, 1, 1]);
        let yt = g.broadcast_to(yt, &[b, self.label_bits, h, w]);
        let mut x = g.concat(&[content, zt, yt], 1);
        for blk in &self.blocks {
            x = blk.forward(ctx, x)?;
        }
        let x = self.up1.forward(ctx, x)?;
        let x = self.bn_up1.forward(ctx, x)?;
        let x = ctx.graph.relu(x);
        let x = self.up2.forward(ctx, x)?;
        Ok(ctx.graph.tanh(x))
    }

    fn batch_norms(&self) -> Vec<&BatchNorm2d> {
        let mut v: Vec<&BatchNorm2d> = Vec::new();
        self.blocks.iter().for_each(|b| v.extend(b.batch_norms()));
        v.push(&self.bn_up1);
        v
    }

    pub fn describe(&self) -> Vec<LayerInfo> {
        let mut v = Vec::new();
        self.blocks.iter().for_each(|b| v.extend(b.describe()));
        v.extend([self.up1.describe(), self.bn_up1.describe(), relu_info("generator.relu_up1"), self.up2.describe()]);
        v.push(LayerInfo { name: "generator.tanh".into(), kind: LayerKind::Tanh });
        v
    }
}

/// Graph nodes of a critic evaluation.
#[derive(Clone, Copy, Debug)]
pub struct CriticVars {
    /// Patch logits `[B,1,h',w']`.
    pub realism: Var,
    /// Label logits `[B,bits]`.
    pub labels: Var,
}

/// Stride-2 convolutions with layer normalization and leaky ReLU, a 3×3 patch
/// realism head and a full-extent label-classification head.
#[derive(Clone, Debug)]
pub struct Critic {
    trunk: Vec<(Conv2d, Option<LayerNorm>)>,
    realism: Conv2d,
    labels: Conv2d,
    slope: f64,
    label_bits: usize,
}

impl Critic {
    pub fn new(cfg: &ModelConfig, label_bits: usize) -> Self {
        let p = "critic";
        let mut trunk = Vec::new();
        let mut cin = 3;
        let mut cout = cfg.critic_base_channels;
        for i in 0..cfg.critic_layers {
            let conv = Conv2d::new(alloc::format!("{p}.conv{i}"), cin, cout, 4, 2, 1);
            let ln = (i > 0).then(|| LayerNorm::new(alloc::format!("{p}.ln{i}"), cout));
            trunk.push((conv, ln));
            cin = cout;
            cout *= 2;
        }
        let div = 1 << cfg.critic_layers;
        let (kh, kw) = (cfg.image_height / div, cfg.image_width / div);
        Self {
            trunk,
            realism: Conv2d::new(alloc::format!("{p}.realism"), cin, 1, 3, 1, 1).without_bias(),
            labels: Conv2d::new(alloc::format!("{p}.labels"), cin, label_bits, 1, 1, 0).with_kernel(kh, kw).without_bias(),
            slope: cfg.critic_leaky_slope,
            label_bits,
        }
    }

    fn init<T: Real, R: Rng + ?Sized>(&self, s: &mut ParamStore<T>, std: f64, rng: &mut R) {
        for (c, ln) in &self.trunk {
            c.init(s, std, rng);
            if let Some(ln) = ln {
                ln.init(s);
            }
        }
        self.realism.init(s, std, rng);
        self.labels.init(s, std, rng);
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<CriticVars> {
        let mut h = x;
        for (c, ln) in &self.trunk {
            h = c.forward(ctx, h)?;
            if let Some(ln) = ln {
                h = ln.forward(ctx, h)?;
            }
            h = ctx.graph.leaky_relu(h, self.slope);
        }
        let realism = self.realism.forward(ctx, h)?;
        let labels = self.labels.forward(ctx, h)?;
        let b = ctx.graph.shape(x)[0];
        let labels = ctx.graph.reshape(labels, &[b, self.label_bits]);
        Ok(CriticVars { realism, labels })
    }

    pub fn describe(&self) -> Vec<LayerInfo> {
        let mut v = Vec::new();
        for (i, (c, ln)) in self.trunk.iter().enumerate() {
            v.push(c.describe());
            if let Some(ln) = ln {
                v.push(ln.describe());
            }
            v.push(LayerInfo { name: alloc::format!("critic.lrelu{i}"), kind: LayerKind::LeakyRelu });
        }
        v.push(self.realism.describe());
        v.push(self.labels.describe());
        v
    }
}

/// Per-sample realism score: mean of the patch logits, shaped `[B]`.
pub fn realism_score<T: Real>(ctx: &mut Ctx<'_, T>, out: &CriticVars) -> Var {
    ctx.graph.mean_rows(out.realism)
}

/// Mean and log-variance of the attribute posterior, each `[B, d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeCode<T> {
    pub mean: Tensor<T>,
    pub log_variance: Tensor<T>,
}

/// Critic outputs as plain tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticOutput<T> {
    /// `[B,1,h',w']`
    pub realism_logits: Tensor<T>,
    /// `[B,bits]`
    pub label_logits: Tensor<T>,
}

impl<T: Real> CriticOutput<T> {
    /// Mean of each sample's patch logits.
    pub fn realism_scores(&self) -> Vec<f64> {
        let b = self.realism_logits.shape()[0];
        let per = self.realism_logits.len() / b;
        self.realism_logits.data().chunks(per).map(|c| c.iter().map(|v| v.as_f64()).sum::<f64>() / per as f64).collect()
    }
}

/// Stacks label vectors into a `[B, bits]` tensor of 0/1 values.
pub fn label_tensor<T: Real>(schema: &LabelSchema, labels: &[LabelVector]) -> Result<Tensor<T>> {
    let bits = schema.total_bits();
    let mut data = Vec::with_capacity(labels.len() * bits);
    for l in labels {
        if l.schema_id() != schema.id() || l.len() != bits {
            return Err(Error::SchemaMismatch("label does not belong to the model's schema".into()));
        }
        schema.group_values(l)?;
        data.extend(l.bits().iter().map(|b| if *b == 0 { T::zero() } else { T::one() }));
    }
    Tensor::from_vec(&[labels.len(), bits], data)
}

/// `z = mean + exp(log_variance / 2) * eps` with caller-supplied noise.
pub fn reparameterize<T: Real>(ctx: &mut Ctx<'_, T>, code: CodeVars, eps: Tensor<T>) -> Var {
    let g = &mut ctx.graph;
    let e = g.constant(eps);
    let half = g.scale(code.log_variance, 0.5);
    let std = g.exp(half);
    let noise = g.mul(std, e);
    g.add(code.mean, noise)
}

pub fn standard_normal<T: Real, R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let v: f64 = StandardNormal.sample(rng);
        T::from_f64(v)
    })
}

/// Draws `z = mean + exp(log_variance / 2) ⊙ ε` with `ε ~ N(0, I)`.
pub fn sample_code<T: Real, R: Rng + ?Sized>(code: &AttributeCode<T>, rng: &mut R) -> Tensor<T> {
    let eps: Tensor<T> = standard_normal(code.mean.shape(), rng);
    sample_code_with_noise(code, &eps)
}

pub fn sample_code_with_noise<T: Real>(code: &AttributeCode<T>, eps: &Tensor<T>) -> Tensor<T> {
    let (lo, hi) = (T::from_f64(LOG_VARIANCE_BOUNDS.0), T::from_f64(LOG_VARIANCE_BOUNDS.1));
    let half = T::from_f64(0.5);
    let data = code
        .mean
        .data()
        .iter()
        .zip(code.log_variance.data())
        .zip(eps.data())
        .map(|((m, lv), e)| *m + (lv.max(lo).min(hi) * half).exp() * *e)
        .collect();
    Tensor::from_vec(code.mean.shape(), data).expect("shape")
}

/// The four networks, their parameters and the schema they were built for.
#[derive(Clone, Debug)]
pub struct ModelBundle<T: Real> {
    pub config: ModelConfig,
    pub schema: LabelSchema,
    pub content_encoder: ContentEncoder,
    pub attribute_encoder: AttributeEncoder,
    pub generator: Generator,
    pub critic: Critic,
    pub params: ParamStore<T>,
    pub checkpoint_id: String,
}

impl<T: Real> ModelBundle<T> {
    /// Builds the networks and draws fresh weights (zero-mean Gaussian,
    /// `config.init_std`) from `rng`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, schema: LabelSchema, rng: &mut R) -> Result<Self> {
        let mut bundle = Self::skeleton(config, schema)?;
        let std = bundle.config.init_std;
        let mut params = ParamStore::new();
        bundle.content_encoder.init(&mut params, std, rng);
        bundle.attribute_encoder.init(&mut params, std, rng);
        bundle.generator.init(&mut params, std, rng);
        bundle.critic.init(&mut params, std, rng);
        bundle.params = params;
        Ok(bundle)
    }

    /// Networks without parameters; used when loading a checkpoint.
    pub fn skeleton(config: ModelConfig, schema: LabelSchema) -> Result<Self> {
        config.validate()?;
        let bits = schema.total_bits();
        Ok(Self {
            content_encoder: ContentEncoder::new(&config),
            attribute_encoder: AttributeEncoder::new(&config),
            generator: Generator::new(&config, bits),
            critic: Critic::new(&config, bits),
            params: ParamStore::new(),
            checkpoint_id: String::from("untrained"),
            config,
            schema,
        })
    }

    /// Parameter and buffer shapes a complete bundle must carry.
    pub fn expected_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let fresh = Self::new(self.config.clone(), self.schema.clone(), &mut rng)?;
        Ok(fresh.params.tensors().into_iter().map(|(k, t)| (k, t.shape().to_vec())).collect())
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [self.config.image_height, self.config.image_width, 3]
    }

    pub fn label_tensor(&self, labels: &[LabelVector]) -> Result<Tensor<T>> {
        label_tensor(&self.schema, labels)
    }

    /// Folds batch-norm statistics from a training pass into running averages.
    pub fn apply_norm_stats(&mut self, stats: &[NormStats<T>]) -> Result<()> {
        let norms: Vec<BatchNorm2d> = self
            .content_encoder
            .batch_norms()
            .into_iter()
            .chain(self.attribute_encoder.batch_norms())
            .chain(self.generator.batch_norms())
            .cloned()
            .collect();
        for s in stats {
            let bn = norms
                .iter()
                .find(|b| b.name == s.layer)
                .ok_or_else(|| Error::MissingParam(s.layer.clone()))?;
            bn.apply_stats(&mut self.params, s)?;
        }
        Ok(())
    }

    /// Layer listing per network, for architecture introspection.
    pub fn describe(&self) -> [(&'static str, Vec<LayerInfo>); 4] {
        [
            ("content_encoder", self.content_encoder.describe()),
            ("attribute_encoder", self.attribute_encoder.describe()),
            ("generator", self.generator.describe()),
            ("critic", self.critic.describe()),
        ]
    }

    fn check_batch(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 {
            return Err(Error::Shape(alloc::format!("expected an image batch (B,3,H,W), got {s:?}")));
        }
        if s[2] % 4 != 0 || s[3] % 4 != 0 {
            return Err(Error::Shape(alloc::format!("image dims {}x{} are not divisible by 4", s[2], s[3])));
        }
        if s[2] != self.config.image_height || s[3] != self.config.image_width {
            return Err(Error::Shape(alloc::format!(
                "image dims {}x{} do not match the model's {}x{}",
                s[2],
                s[3],
                self.config.image_height,
                self.config.image_width
            )));
        }
        Ok(())
    }

    /// Content maps `[B, C, H/4, W/4]` (inference mode).
    pub fn content_encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(x)?;
        let mut ctx = Ctx::inference(&self.params);
        let xv = ctx.input(x.clone());
        let c = self.content_encoder.forward(&mut ctx, xv)?;
        Ok(ctx.graph.value(c).clone())
    }

    /// Attribute posterior `(mean, log_variance)`, each `[B, d]` (inference mode).
    pub fn attribute_encode(&self, x: &Tensor<T>) -> Result<AttributeCode<T>> {
        self.check_batch(x)?;
        let mut ctx = Ctx::inference(&self.params);
        let xv = ctx.input(x.clone());
        let code = self.attribute_encoder.forward(&mut ctx, xv)?;
        Ok(AttributeCode {
            mean: ctx.graph.value(code.mean).clone(),
            log_variance: ctx.graph.value(code.log_variance).clone(),
        })
    }

    /// Images in `[-1, 1]` from content maps, attribute vectors and labels.
    pub fn generate(&self, content: &Tensor<T>, z: &Tensor<T>, labels: &[LabelVector]) -> Result<Tensor<T>> {
        let cs = self.config.content_shape();
        if content.shape().len() != 4 || content.shape()[1..] != cs {
            return Err(Error::Shape(alloc::format!("content map {:?} does not match {:?}", content.shape(), cs)));
        }
        let y = self.label_tensor(labels)?;
        let mut ctx = Ctx::inference(&self.params);
        let (cv, zv, yv) = (ctx.input(content.clone()), ctx.input(z.clone()), ctx.input(y));
        let out = self.generator.forward(&mut ctx, cv, zv, yv)?;
        Ok(ctx.graph.value(out).clone())
    }

    pub fn discriminate(&self, x: &Tensor<T>) -> Result<CriticOutput<T>> {
        self.check_batch(x)?;
        let mut ctx = Ctx::inference(&self.params);
        let xv = ctx.input(x.clone());
        let out = self.critic.forward(&mut ctx, xv)?;
        Ok(CriticOutput {
            realism_logits: ctx.graph.value(out.realism).clone(),
            label_logits: ctx.graph.value(out.labels).clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(h: usize, w: usize) -> ModelConfig {
        ModelConfig {
            encoder_base_channels: 4,
            content_channels: 8,
            attribute_dim: 3,
            content_res_blocks: 1,
            attribute_res_blocks: 1,
            generator_res_blocks: 2,
            critic_base_channels: 4,
            critic_layers: 2,
            ..ModelConfig::desk(h, w)
        }
    }

    fn bundle(h: usize, w: usize) -> ModelBundle<f32> {
        let schema = LabelSchema::synthetic_shapes();
        ModelBundle::new(tiny(h, w), schema, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn shapes_follow_image_size() {
        for (h, w) in [(16, 16), (16, 32)] {
            let m = bundle(h, w);
            let x = Tensor::from_fn(&[2, 3, h, w], |i| ((i as f32) * 0.37).sin());
            let c = m.content_encode(&x).unwrap();
            assert_eq!(c.shape(), &[2, 8, h / 4, w / 4]);
            let code = m.attribute_encode(&x).unwrap();
            assert_eq!(code.mean.shape(), &[2, 3]);
            let y = m.schema.empty();
            let out = m.generate(&c, &code.mean, &[y.clone(), y]).unwrap();
            assert_eq!(out.shape(), x.shape());
            assert!(out.data().iter().all(|v| v.abs() <= 1.0));
            let d = m.discriminate(&x).unwrap();
            assert_eq!(d.label_logits.shape(), &[2, m.schema.total_bits()]);
            assert_eq!(d.realism_scores().len(), 2);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = bundle(16, 16);
        assert!(matches!(m.content_encode(&Tensor::zeros(&[1, 3, 18, 16])), Err(Error::Shape(_))));
        assert!(matches!(m.content_encode(&Tensor::zeros(&[1, 1, 16, 16])), Err(Error::Shape(_))));
        let other = LabelSchema::new([("a", vec!["x", "y"])]).unwrap();
        let c = Tensor::zeros(&[1, 8, 4, 4]);
        let z = Tensor::zeros(&[1, 3]);
        assert!(matches!(m.generate(&c, &z, &[other.empty()]), Err(Error::SchemaMismatch(_))));
        assert!(ModelConfig { critic_layers: 5, ..tiny(16, 16) }.validate().is_err());
    }

    #[test]
    fn init_is_deterministic() {
        let a = bundle(16, 16);
        let b = bundle(16, 16);
        assert_eq!(a.params, b.params);
        let names: Vec<String> = a.params.params().map(|(k, _)| k.clone()).collect();
        for prefix in [CONTENT_PREFIX, ATTRIBUTE_PREFIX, GENERATOR_PREFIX, CRITIC_PREFIX] {
            assert!(names.iter().any(|n| n.starts_with(prefix)));
        }
    }

    #[test]
    fn normalization_placement() {
        let m = bundle(16, 16);
        let [(_, ce), (_, ae), (_, g), (_, d)] = m.describe();
        for net in [&ce, &ae, &g] {
            assert!(net.iter().any(|l| l.kind == LayerKind::BatchNorm));
            assert!(!net.iter().any(|l| l.kind == LayerKind::LayerNorm));
        }
        assert!(d.iter().any(|l| l.kind == LayerKind::LayerNorm));
        assert!(!d.iter().any(|l| l.kind == LayerKind::BatchNorm));
        assert_eq!(g.last().unwrap().kind, LayerKind::Tanh);
        assert_eq!(ce.iter().filter(|l| l.kind == LayerKind::Residual).count(), 1);
    }

    #[test]
    fn paper_scale_content_shape() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.content_shape(), [256, 32, 32]);
        let wide = ModelConfig { image_width: 128, image_height: 64, ..cfg };
        assert_eq!(wide.content_shape(), [256, 16, 32]);
    }

    #[test]
    fn sampled_code_uses_clamped_variance() {
        let code = AttributeCode {
            mean: Tensor::from_vec(&[1, 2], vec![1.0f64, -1.0]).unwrap(),
            log_variance: Tensor::from_vec(&[1, 2], vec![0.0, 50.0]).unwrap(),
        };
        let eps = Tensor::from_vec(&[1, 2], vec![0.5, 1.0]).unwrap();
        let z = sample_code_with_noise(&code, &eps);
        assert!((z.data()[0] - 1.5).abs() < 1e-12);
        assert!((z.data()[1] - (-1.0 + 5.0f64.exp())).abs() < 1e-9);
    }
}
