//! Training objectives: Wasserstein critic terms with gradient penalty,
//! grouped label cross-entropy, L1 reconstruction terms, the Gaussian KL term
//! and the weighted totals.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::label::{LabelSchema, LabelVector};
use crate::nn::Ctx;
use crate::tensor::{Real, Tensor};

const NORM_EPS: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cyc: f64,
    #[serde(rename = "KL")]
    pub kl: f64,
    pub label_d: f64,
    pub label_g: f64,
    pub gp: f64,
    pub rec: f64,
    pub latent: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { cyc: 10.0, kl: 0.01, label_d: 1.0, label_g: 1.0, gp: 10.0, rec: 1.0, latent: 5.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("cyc", self.cyc),
            ("KL", self.kl),
            ("label_D", self.label_d),
            ("label_G", self.label_g),
            ("gp", self.gp),
            ("rec", self.rec),
            ("latent", self.latent),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(alloc::format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Scalar loss values of one training iteration.
///
/// `adv` and `adv_prime` carry the adversarial terms as seen by whichever
/// network was updated last: for the critic, `adv` includes the penalty term
/// and both are the quantities whose negation the critic minimizes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub adv: f64,
    pub adv_prime: f64,
    #[serde(rename = "label_D")]
    pub label_d: f64,
    #[serde(rename = "label_G")]
    pub label_g: f64,
    #[serde(rename = "label_G_prime")]
    pub label_g_prime: f64,
    pub cyc: f64,
    pub rec: f64,
    #[serde(rename = "KL")]
    pub kl: f64,
    pub latent: f64,
    #[serde(rename = "total_G")]
    pub total_g: f64,
    #[serde(rename = "total_D")]
    pub total_d: f64,
}

impl LossReport {
    pub fn terms(&self) -> [(&'static str, f64); 11] {
        [
            ("adv", self.adv),
            ("adv_prime", self.adv_prime),
            ("label_D", self.label_d),
            ("label_G", self.label_g),
            ("label_G_prime", self.label_g_prime),
            ("cyc", self.cyc),
            ("rec", self.rec),
            ("KL", self.kl),
            ("latent", self.latent),
            ("total_G", self.total_g),
            ("total_D", self.total_d),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.terms().iter().all(|(_, v)| v.is_finite())
    }
}

/// Weighted generator and critic totals from the individual terms.
pub fn total_losses(r: &LossReport, w: &LossWeights) -> Result<(f64, f64)> {
    for (name, v) in r.terms().iter().take(9) {
        if !v.is_finite() {
            return Err(Error::NonFinite(alloc::format!("loss term {name} = {v}")));
        }
    }
    let total_g = w.label_g * (r.label_g + r.label_g_prime)
        + (r.adv + r.adv_prime)
        + w.cyc * r.cyc
        + w.rec * r.rec
        + w.latent * r.latent
        + w.kl * r.kl;
    let total_d = -(r.adv + r.adv_prime) + w.label_d * r.label_d;
    Ok((total_g, total_d))
}

fn check_same<T: Real>(g: &Graph<T>, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::Shape(alloc::format!("shape mismatch: {:?} vs {:?}", g.shape(a), g.shape(b))));
    }
    Ok(())
}

/// Mean absolute elementwise difference.
pub fn l1_loss<T: Real>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var> {
    check_same(g, a, b)?;
    let d = g.sub(a, b);
    let d = g.abs(d);
    Ok(g.mean_all(d))
}

/// Cycle-consistency between an input batch and its round trip.
pub fn cycle_loss<T: Real>(g: &mut Graph<T>, x: Var, x_hat: Var) -> Result<Var> {
    l1_loss(g, x, x_hat)
}

/// Reconstruction of an input under its own matching label.
pub fn identity_reconstruction_loss<T: Real>(g: &mut Graph<T>, x: Var, x_hat_a: Var) -> Result<Var> {
    l1_loss(g, x, x_hat_a)
}

/// Recovery of a prior attribute sample from the image generated with it.
pub fn latent_regression_loss<T: Real>(g: &mut Graph<T>, z: Var, z_hat: Var) -> Result<Var> {
    l1_loss(g, z, z_hat)
}

/// `½ Σ (exp(lv) + m² − 1 − lv)` per sample, averaged over the batch.
pub fn kl_loss<T: Real>(g: &mut Graph<T>, mean: Var, log_variance: Var) -> Result<Var> {
    check_same(g, mean, log_variance)?;
    let b = g.shape(mean)[0];
    let e = g.exp(log_variance);
    let m2 = g.square(mean);
    let s = g.add(e, m2);
    let s = g.sub(s, log_variance);
    let s = g.offset(s, -1.0);
    let total = g.sum_all(s);
    Ok(g.scale(total, 0.5 / b as f64))
}

/// Sum over label groups of softmax cross-entropy against complete targets,
/// averaged over the batch. `logits` is `[B, bits]`.
pub fn label_loss<T: Real>(g: &mut Graph<T>, schema: &LabelSchema, logits: Var, targets: &[LabelVector]) -> Result<Var> {
    let shape = g.shape(logits).to_vec();
    let b = targets.len();
    if shape != [b, schema.total_bits()] {
        return Err(Error::SchemaMismatch(alloc::format!(
            "label logits {shape:?} do not match {b} targets of {} bits",
            schema.total_bits()
        )));
    }
    let mut picks: Vec<Vec<usize>> = Vec::with_capacity(b);
    for t in targets {
        if t.schema_id() != schema.id() {
            return Err(Error::SchemaMismatch("target label belongs to another schema".into()));
        }
        let vals = schema.group_values(t)?;
        let mut row = Vec::with_capacity(vals.len());
        for (gi, v) in vals.iter().enumerate() {
            match v {
                Some(v) => row.push(*v),
                None => return Err(Error::IncompleteLabel { group: schema.groups()[gi].name.clone() }),
            }
        }
        picks.push(row);
    }
    let mut total: Option<Var> = None;
    for gi in 0..schema.num_groups() {
        let (start, k) = schema.group_range(gi);
        let s = g.slice(logits, 1, start, k);
        let vals = g.value(s).data();
        let maxes: Vec<T> =
            vals.chunks(k).map(|r| r.iter().copied().fold(T::neg_infinity(), T::max)).collect();
        let m = g.constant(Tensor::from_vec(&[b, 1], maxes)?);
        let sh = g.sub(s, m);
        let e = g.exp(sh);
        let se = g.sum_to(e, &[b, 1]);
        let lse = g.ln(se);
        let logp = g.sub(sh, lse);
        let onehot = Tensor::from_fn(&[b, k], |i| if picks[i / k][gi] == i % k { T::one() } else { T::zero() });
        let oh = g.constant(onehot);
        let picked = g.mul(logp, oh);
        let picked = g.sum_all(picked);
        total = Some(match total {
            Some(t) => g.add(t, picked),
            None => picked,
        });
    }
    let total = total.ok_or_else(|| Error::Schema("schema has no groups".into()))?;
    Ok(g.scale(total, -1.0 / b as f64))
}

/// Critic's Wasserstein estimate `E[D(fake)] − E[D(real)]` from per-sample scores.
pub fn critic_adversarial<T: Real>(g: &mut Graph<T>, real_scores: Var, fake_scores: Var) -> Var {
    let r = g.mean_all(real_scores);
    let f = g.mean_all(fake_scores);
    g.sub(f, r)
}

/// `−E[D(fake)]`.
pub fn generator_adversarial<T: Real>(g: &mut Graph<T>, fake_scores: Var) -> Var {
    let f = g.mean_all(fake_scores);
    g.neg(f)
}

/// Scalar form over batch means: `(−E[fake], E[fake] − E[real] + λ·gp)`, the
/// generator's and the critic's adversarial losses.
pub fn adversarial_losses(real_mean: f64, fake_mean: f64, gp: f64, gp_weight: f64) -> (f64, f64) {
    (-fake_mean, fake_mean - real_mean + gp_weight * gp)
}

/// Part-C terms for the generator: label loss of the mixed fakes against the
/// filled targets and their adversarial term.
pub fn part_c_losses<T: Real>(
    g: &mut Graph<T>,
    schema: &LabelSchema,
    fake_scores: Var,
    fake_logits: Var,
    targets: &[LabelVector],
) -> Result<(Var, Var)> {
    let label = label_loss(g, schema, fake_logits, targets)?;
    let adv = generator_adversarial(g, fake_scores);
    Ok((label, adv))
}

/// `E[(‖∇ D(x̃)‖₂ − 1)²]` with `x̃ = u·real + (1−u)·fake`, `u` given per sample.
///
/// `critic` maps an image batch to per-sample scores `[B]`. The returned node
/// stays differentiable with respect to the critic's tracked parameters.
pub fn gradient_penalty<T, F>(
    ctx: &mut Ctx<'_, T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    u: &[f64],
    critic: F,
) -> Result<Var>
where
    T: Real,
    F: FnOnce(&mut Ctx<'_, T>, Var) -> Result<Var>,
{
    if real.shape() != fake.shape() || real.shape().is_empty() {
        return Err(Error::Shape(alloc::format!("real {:?} vs fake {:?}", real.shape(), fake.shape())));
    }
    let b = real.shape()[0];
    if u.len() != b {
        return Err(Error::Shape(alloc::format!("{} interpolation weights for batch {b}", u.len())));
    }
    let per = real.len() / b;
    let mixed: Vec<T> = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(i, (r, f))| {
            let w = T::from_f64(u[i / per]);
            w * *r + (T::one() - w) * *f
        })
        .collect();
    let xt = ctx.graph.leaf(Tensor::from_vec(real.shape(), mixed)?);
    let scores = critic(ctx, xt)?;
    let g = &mut ctx.graph;
    let total = g.sum_all(scores);
    let grad = g.grad(total, &[xt])[0];
    let Some(grad) = grad else {
        // Critic ignores its input: zero gradient everywhere.
        return Ok(g.scalar(1.0));
    };
    let sq = g.square(grad);
    let mut keep = alloc::vec![1usize; real.shape().len()];
    keep[0] = b;
    let norms = g.sum_to(sq, &keep);
    let norms = g.offset(norms, NORM_EPS);
    let norms = g.sqrt(norms);
    let dev = g.offset(norms, -1.0);
    let dev = g.square(dev);
    Ok(g.mean_all(dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelSchema;

    fn scalar(g: &Graph<f64>, v: Var) -> f64 {
        g.value(v).item()
    }

    #[test]
    fn uniform_logits_cross_entropy() {
        let schema = LabelSchema::synthetic_shapes();
        let mut g = Graph::<f64>::new();
        let logits = g.constant(Tensor::zeros(&[2, 7]));
        let mut a = crate::label::Assignment::new();
        a.insert("color".into(), Some("green".into()));
        a.insert("size".into(), Some("large".into()));
        a.insert("shape".into(), Some("square".into()));
        let t = schema.encode(&a).unwrap();
        let l = label_loss(&mut g, &schema, logits, &[t.clone(), t]).unwrap();
        let expect = 3f64.ln() + 2.0 * 2f64.ln();
        assert!((scalar(&g, l) - expect).abs() < 1e-12);
    }

    #[test]
    fn kl_closed_form() {
        let mut g = Graph::<f64>::new();
        let m = g.constant(Tensor::ones(&[3, 16]));
        let lv = g.constant(Tensor::zeros(&[3, 16]));
        let k = kl_loss(&mut g, m, lv).unwrap();
        assert!((scalar(&g, k) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn totals_with_unit_parts() {
        let r = LossReport {
            adv: 1.0,
            adv_prime: 1.0,
            label_d: 1.0,
            label_g: 1.0,
            label_g_prime: 1.0,
            cyc: 1.0,
            rec: 1.0,
            kl: 1.0,
            latent: 1.0,
            ..Default::default()
        };
        let (tg, td) = total_losses(&r, &LossWeights::default()).unwrap();
        assert!((tg - 20.01).abs() < 1e-12);
        assert!((td - (-2.0 + 1.0)).abs() < 1e-12);
        let bad = LossReport { cyc: f64::NAN, ..r };
        match total_losses(&bad, &LossWeights::default()) {
            Err(Error::NonFinite(m)) => assert!(m.contains("cyc")),
            other => panic!("{other:?}"),
        }
    }
}
