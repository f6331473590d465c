//! Alternating critic and generator updates over the main branch and the
//! three auxiliary branches (identity reconstruction, latent regression and
//! cross-image mixing).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Batch, BatchIterator, Dataset};
use crate::error::{Error, Result};
use crate::graph::Var;
use crate::label::{LabelSampling, LabelVector};
use crate::loss::{self, LossReport, LossWeights};
use crate::model::{
    reparameterize, standard_normal, ModelBundle, ATTRIBUTE_PREFIX, CONTENT_PREFIX, CRITIC_PREFIX, GENERATOR_PREFIX,
};
use crate::nn::{Ctx, Mode, NormStats};
use crate::optim::Adam;
use crate::tensor::{Real, Tensor};

/// Auxiliary branches that can be switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    /// Identity reconstruction and KL terms.
    A,
    /// Latent regression term.
    B,
    /// Cross-image label and adversarial terms.
    C,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_betas: (f64, f64),
    pub epochs: usize,
    /// Fraction of the epochs trained at the initial learning rate before the
    /// linear decay to zero.
    pub decay_start_fraction: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub ablation: BTreeSet<Ablation>,
    pub seed: u64,
    pub label_sampling: LabelSampling,
    /// Draw attribute codes from the posterior; `false` uses its mean.
    pub sample_attribute_code: bool,
    /// Draw a separate random label for the cross-image branch.
    pub fresh_mixing_labels: bool,
    /// Also apply the gradient penalty on cross-image fakes.
    pub penalize_mixed_fakes: bool,
    /// Stop after this many generator updates even if epochs remain.
    pub max_generator_steps: Option<usize>,
    pub checkpoint_every: usize,
    pub sample_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            batch_size: 32,
            lr: 1e-4,
            adam_betas: (0.5, 0.999),
            epochs: 20,
            decay_start_fraction: 0.5,
            n_critic: 5,
            ablation: BTreeSet::new(),
            seed: 0,
            label_sampling: LabelSampling::default(),
            sample_attribute_code: true,
            fresh_mixing_labels: false,
            penalize_mixed_fakes: false,
            max_generator_steps: None,
            checkpoint_every: 1000,
            sample_every: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.decay_start_fraction > 0.0 && self.decay_start_fraction <= 1.0) {
            return Err(Error::Config("decay_start_fraction must be in (0, 1]".into()));
        }
        if self.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) || self.epochs == 0 {
            return Err(Error::Config("lr and epochs must be positive".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn ablated(&self, part: Ablation) -> bool {
        self.ablation.contains(&part)
    }

    /// Learning rate after `progress` epochs: constant, then linear to zero.
    pub fn learning_rate(&self, progress: f64) -> f64 {
        let total = self.epochs as f64;
        let start = self.decay_start_fraction * total;
        if progress <= start {
            return self.lr;
        }
        let span = total - start;
        if span <= 0.0 {
            return 0.0;
        }
        (self.lr * (1.0 - (progress - start) / span)).max(0.0)
    }
}

/// Tensors and labels produced by one generator update.
#[derive(Clone, Debug)]
pub struct StepArtifacts<T> {
    pub x_bar: Tensor<T>,
    pub x_hat: Tensor<T>,
    pub x_hat_a: Tensor<T>,
    pub x_hat_b: Tensor<T>,
    pub x_hat_c: Tensor<T>,
    pub y_r: Vec<LabelVector>,
    pub y_m: Vec<LabelVector>,
    /// Main-branch label targets, `fill(y_r, y_gt)`.
    pub targets: Vec<LabelVector>,
    /// Cross-image label targets, `fill(y_r, y_gt of the rolled image)`.
    pub mixing_targets: Vec<LabelVector>,
    pub report: LossReport,
}

fn roll_perm(b: usize) -> Vec<usize> {
    (0..b).map(|i| (i + 1) % b).collect()
}

fn roll<V: Clone>(v: &[V]) -> Vec<V> {
    roll_perm(v.len()).into_iter().map(|i| v[i].clone()).collect()
}

fn check_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("loss term {name} = {v}")))
    }
}

/// Owns the bundle, both optimizers and the random stream.
#[derive(Clone, Debug)]
pub struct Trainer<T: Real> {
    pub bundle: ModelBundle<T>,
    pub config: TrainConfig,
    opt_g: Adam<T>,
    opt_d: Adam<T>,
    rng: ChaCha8Rng,
    lr: f64,
    generator_steps: usize,
}

/// Random draws shared by the fake-generation paths.
struct Draws<T> {
    y_r: Vec<LabelVector>,
    y_mix: Vec<LabelVector>,
    eps: Tensor<T>,
}

impl<T: Real> Trainer<T> {
    pub fn new(bundle: ModelBundle<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (b1, b2) = config.adam_betas;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            lr: config.lr,
            bundle,
            opt_g: Adam::new(b1, b2),
            opt_d: Adam::new(b1, b2),
            config,
            generator_steps: 0,
        })
    }

    pub fn generator_steps(&self) -> usize {
        self.generator_steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    fn draw(&mut self, batch: &Batch) -> Draws<T> {
        let schema = &self.bundle.schema;
        let policy = self.config.label_sampling;
        let b = batch.len();
        let y_r: Vec<LabelVector> = (0..b).map(|_| schema.sample_random(&policy, &mut self.rng)).collect();
        let y_mix = if self.config.fresh_mixing_labels {
            (0..b).map(|_| schema.sample_random(&policy, &mut self.rng)).collect()
        } else {
            y_r.clone()
        };
        let eps = standard_normal(&[b, self.bundle.config.attribute_dim], &mut self.rng);
        Draws { y_r, y_mix, eps }
    }

    fn code(&self, ctx: &mut Ctx<'_, T>, x: Var, eps: &Tensor<T>) -> Result<(Var, Var, Var)> {
        let code = self.bundle.attribute_encoder.forward(ctx, x)?;
        let z = if self.config.sample_attribute_code { reparameterize(ctx, code, eps.clone()) } else { code.mean };
        Ok((z, code.mean, code.log_variance))
    }

    /// One critic update on `batch`; encoders and generator are untouched.
    pub fn discriminator_step(&mut self, batch: &Batch) -> Result<LossReport> {
        let draws = self.draw(batch);
        let b = batch.len();
        let u: Vec<f64> = (0..b * if self.config.penalize_mixed_fakes { 2 } else { 1 })
            .map(|_| self.rng.gen::<f64>())
            .collect();
        let x: Tensor<T> = batch.images.cast();
        let bundle = &self.bundle;
        let w = &self.config.weights;

        let (x_bar, x_mix) = {
            let mut ctx = Ctx::new(&bundle.params, Mode::Train, &[]);
            let xv = ctx.input(x.clone());
            let c = bundle.content_encoder.forward(&mut ctx, xv)?;
            let (z, _, _) = self.code(&mut ctx, xv, &draws.eps)?;
            let yr = ctx.input(bundle.label_tensor(&draws.y_r)?);
            let fake = bundle.generator.forward(&mut ctx, c, z, yr)?;
            let z_b = ctx.graph.permute_rows(z, &roll_perm(b));
            let ym = ctx.input(bundle.label_tensor(&draws.y_mix)?);
            let mixed = bundle.generator.forward(&mut ctx, c, z_b, ym)?;
            ctx.discard_stats();
            (ctx.graph.value(fake).clone(), ctx.graph.value(mixed).clone())
        };

        let mut ctx = Ctx::new(&bundle.params, Mode::Train, &[CRITIC_PREFIX]);
        let all = ctx.input(Tensor::stack_rows(&[&x, &x_bar, &x_mix])?);
        let out = bundle.critic.forward(&mut ctx, all)?;
        let scores = crate::model::realism_score(&mut ctx, &out);
        let g = &mut ctx.graph;
        let real_s = g.slice(scores, 0, 0, b);
        let fake_s = g.slice(scores, 0, b, b);
        let mix_s = g.slice(scores, 0, 2 * b, b);
        let real_logits = g.slice(out.labels, 0, 0, b);
        let wasserstein = loss::critic_adversarial(g, real_s, fake_s);
        let mix_mean = g.mean_all(mix_s);
        let real_mean = g.mean_all(real_s);
        let mix_gap = g.sub(mix_mean, real_mean);
        let label_d = loss::label_loss(g, &bundle.schema, real_logits, &batch.labels)?;

        let (real_gp, fake_gp) = if self.config.penalize_mixed_fakes {
            (Tensor::stack_rows(&[&x, &x])?, Tensor::stack_rows(&[&x_bar, &x_mix])?)
        } else {
            (x.clone(), x_bar.clone())
        };
        let critic = &bundle.critic;
        let gp = loss::gradient_penalty(&mut ctx, &real_gp, &fake_gp, &u, |c, v| {
            let o = critic.forward(c, v)?;
            Ok(crate::model::realism_score(c, &o))
        })?;

        let mix_gate = if self.config.ablated(Ablation::C) { 0.0 } else { 1.0 };
        let g = &mut ctx.graph;
        let gp_w = g.scale(gp, w.gp);
        let t = g.add(wasserstein, gp_w);
        let mix_term = g.scale(mix_gap, mix_gate);
        let t = g.add(t, mix_term);
        let label_w = g.scale(label_d, w.label_d);
        let total = g.add(t, label_w);

        let value = |v: Var| g.value(v).item().as_f64();
        let gp_v = check_finite("gp", value(gp))?;
        let mut report = LossReport {
            adv: check_finite("adv", -value(wasserstein) - w.gp * gp_v)?,
            adv_prime: check_finite("adv_prime", -mix_gate * value(mix_gap))?,
            label_d: check_finite("label_D", value(label_d))?,
            ..LossReport::default()
        };
        let (_, total_d) = loss::total_losses(&report, w)?;
        report.total_d = total_d;
        check_finite("total_D", value(total))?;

        let tracked = ctx.tracked_params();
        let grads = collect_grads(&mut ctx, total, &tracked);
        self.opt_d.update(&mut self.bundle.params, &grads, self.lr)?;
        Ok(report)
    }

    /// One joint update of both encoders and the generator on `batch`.
    pub fn generator_step(&mut self, batch: &Batch) -> Result<StepArtifacts<T>> {
        let draws = self.draw(batch);
        let b = batch.len();
        let schema = self.bundle.schema.clone();
        let policy = self.config.label_sampling;
        let y_m: Vec<LabelVector> = batch
            .labels
            .iter()
            .map(|y| schema.sample_matching(y, &policy, &mut self.rng))
            .collect::<Result<_>>()?;
        let z_prior: Tensor<T> = standard_normal(&[b, self.bundle.config.attribute_dim], &mut self.rng);
        let targets: Vec<LabelVector> =
            draws.y_r.iter().zip(&batch.labels).map(|(r, gt)| schema.fill(r, gt)).collect::<Result<_>>()?;
        let rolled_gt = roll(&batch.labels);
        let mixing_targets: Vec<LabelVector> =
            draws.y_mix.iter().zip(&rolled_gt).map(|(r, gt)| schema.fill(r, gt)).collect::<Result<_>>()?;
        let x: Tensor<T> = batch.images.cast();
        let bundle = &self.bundle;
        let w = &self.config.weights;

        let mut ctx = Ctx::new(&bundle.params, Mode::Train, &[CONTENT_PREFIX, ATTRIBUTE_PREFIX, GENERATOR_PREFIX]);
        let xv = ctx.input(x.clone());
        let c = bundle.content_encoder.forward(&mut ctx, xv)?;
        let (z, mean, log_var) = self.code(&mut ctx, xv, &draws.eps)?;
        let yr = ctx.input(bundle.label_tensor(&draws.y_r)?);
        let ym = ctx.input(bundle.label_tensor(&y_m)?);
        let y0 = ctx.input(Tensor::zeros(&[b, schema.total_bits()]));
        let ymix = ctx.input(bundle.label_tensor(&draws.y_mix)?);
        let zp = ctx.input(z_prior);

        let x_bar = bundle.generator.forward(&mut ctx, c, z, yr)?;
        let c_bar = bundle.content_encoder.forward(&mut ctx, x_bar)?;
        let x_hat = bundle.generator.forward(&mut ctx, c_bar, z, ym)?;
        let x_hat_a = bundle.generator.forward(&mut ctx, c, z, ym)?;
        let x_hat_b = bundle.generator.forward(&mut ctx, c, zp, y0)?;
        let z_hat = bundle.attribute_encoder.forward(&mut ctx, x_hat_b)?.mean;
        let z_b = ctx.graph.permute_rows(z, &roll_perm(b));
        let x_hat_c = bundle.generator.forward(&mut ctx, c, z_b, ymix)?;

        let both = ctx.graph.concat(&[x_bar, x_hat_c], 0);
        let out = bundle.critic.forward(&mut ctx, both)?;
        let scores = crate::model::realism_score(&mut ctx, &out);
        let g = &mut ctx.graph;
        let bar_s = g.slice(scores, 0, 0, b);
        let mix_s = g.slice(scores, 0, b, b);
        let bar_logits = g.slice(out.labels, 0, 0, b);
        let mix_logits = g.slice(out.labels, 0, b, b);

        let adv = loss::generator_adversarial(g, bar_s);
        let label_g = loss::label_loss(g, &schema, bar_logits, &targets)?;
        let cyc = loss::cycle_loss(g, xv, x_hat)?;
        let rec = loss::identity_reconstruction_loss(g, xv, x_hat_a)?;
        let kl = loss::kl_loss(g, mean, log_var)?;
        let latent = loss::latent_regression_loss(g, zp, z_hat)?;
        let (label_g_prime, adv_prime) = loss::part_c_losses(g, &schema, mix_s, mix_logits, &mixing_targets)?;

        let gate = |p: Ablation| if self.config.ablated(p) { 0.0 } else { 1.0 };
        let (ga, gb, gc) = (gate(Ablation::A), gate(Ablation::B), gate(Ablation::C));
        let terms = [
            (label_g, w.label_g),
            (label_g_prime, w.label_g * gc),
            (adv, 1.0),
            (adv_prime, gc),
            (cyc, w.cyc),
            (rec, w.rec * ga),
            (latent, w.latent * gb),
            (kl, w.kl * ga),
        ];
        let mut total = g.scale(terms[0].0, terms[0].1);
        for (v, k) in &terms[1..] {
            let s = g.scale(*v, *k);
            total = g.add(total, s);
        }

        let value = |v: Var| g.value(v).item().as_f64();
        let mut report = LossReport {
            adv: check_finite("adv", value(adv))?,
            adv_prime: check_finite("adv_prime", gc * value(adv_prime))?,
            label_g: check_finite("label_G", value(label_g))?,
            label_g_prime: check_finite("label_G_prime", gc * value(label_g_prime))?,
            cyc: check_finite("cyc", value(cyc))?,
            rec: check_finite("rec", ga * value(rec))?,
            kl: check_finite("KL", ga * value(kl))?,
            latent: check_finite("latent", gb * value(latent))?,
            ..LossReport::default()
        };
        let (total_g, _) = loss::total_losses(&report, w)?;
        report.total_g = total_g;
        check_finite("total_G", value(total))?;

        let grab = |v: Var| g.value(v).clone();
        let artifacts = StepArtifacts {
            x_bar: grab(x_bar),
            x_hat: grab(x_hat),
            x_hat_a: grab(x_hat_a),
            x_hat_b: grab(x_hat_b),
            x_hat_c: grab(x_hat_c),
            y_r: draws.y_r,
            y_m,
            targets,
            mixing_targets,
            report,
        };

        let stats = first_stats(ctx.take_stats());
        let tracked = ctx.tracked_params();
        let grads = collect_grads(&mut ctx, total, &tracked);
        self.opt_g.update(&mut self.bundle.params, &grads, self.lr)?;
        self.bundle.apply_norm_stats(&stats)?;
        self.generator_steps += 1;
        Ok(artifacts)
    }

    /// `n_critic` critic updates then one generator update, each on a fresh
    /// batch. The returned report merges the critic fields of the last
    /// critic update into the generator report.
    pub fn iteration(&mut self, data: &Dataset, batches: &mut BatchIterator) -> Result<StepArtifacts<T>> {
        self.lr = self.config.learning_rate(batches.progress());
        let mut last_d = LossReport::default();
        for _ in 0..self.config.n_critic {
            let batch = data.batch(&batches.next_indices())?;
            last_d = self.discriminator_step(&batch)?;
        }
        let batch = data.batch(&batches.next_indices())?;
        let mut art = self.generator_step(&batch)?;
        art.report.label_d = last_d.label_d;
        art.report.total_d = last_d.total_d;
        Ok(art)
    }

    /// Generator updates that make up the configured number of epochs.
    pub fn planned_generator_steps(&self, batches_per_epoch: usize) -> usize {
        let per_iter = self.config.n_critic + 1;
        let planned = (self.config.epochs * batches_per_epoch).div_ceil(per_iter).max(1);
        self.config.max_generator_steps.map_or(planned, |m| m.min(planned))
    }
}

fn collect_grads<T: Real>(ctx: &mut Ctx<'_, T>, total: Var, tracked: &[(String, Var)]) -> Vec<(String, Tensor<T>)> {
    let vars: Vec<Var> = tracked.iter().map(|(_, v)| *v).collect();
    let grads = ctx.graph.grad(total, &vars);
    tracked
        .iter()
        .zip(grads)
        .filter_map(|((name, _), g)| g.map(|g| (name.clone(), ctx.graph.value(g).clone())))
        .collect()
}

/// Keeps the first statistics recorded per layer: those of the pass over
/// real images (encoders) and of the main-branch generation (generator).
fn first_stats<T>(stats: Vec<NormStats<T>>) -> Vec<NormStats<T>> {
    let mut seen = BTreeMap::new();
    for s in stats {
        seen.entry(s.layer.clone()).or_insert(s);
    }
    seen.into_values().collect()
}
