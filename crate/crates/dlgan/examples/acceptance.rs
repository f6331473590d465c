//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! ```text
//! cargo run --release -p dlgan --example acceptance -- --work target/acceptance
//! ```
//!
//! The end-to-end and ablation criteria train three desk-scale models unless
//! checkpoints are supplied with `--full`, `--ablation-a` and `--ablation-b`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use base64::Engine;
use clap::Parser;
use dlgan::checkpoint;
use dlgan::dataset::{load_labeled_folder, write_synthetic};
use dlgan::eval::{
    attribute_transfer, color_sweep, image_quality, label_priority, pairs, shapes_oracle, single_group_change,
    train_extractor, EvalConfig,
};
use dlgan::imageio::encode_png;
use dlgan::run::{fit, init_bundle};
use dlgan::service::{router, AppState, ServiceConfig};
use dlgan_core::data::Dataset;
use dlgan_core::graph::Var;
use dlgan_core::infer::Manipulator;
use dlgan_core::label::{LabelKind, LabelSchema, LabelVector};
use dlgan_core::loss::{
    critic_adversarial, cycle_loss, gradient_penalty, identity_reconstruction_loss, kl_loss, label_loss,
    latent_regression_loss, part_c_losses,
};
use dlgan_core::metrics::{disentanglement_probe, fid, mmd2_unbiased, kid, FeatureSet};
use dlgan_core::model::{standard_normal, ModelBundle, ModelConfig};
use dlgan_core::nn::{Conv2d, Ctx, Mode, ParamStore};
use dlgan_core::synth::SynthSpec;
use dlgan_core::train::{Ablation, TrainConfig};
use dlgan_core::{Graph, Tensor};
use http_body_util::BodyExt;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tower::ServiceExt;

#[derive(Parser)]
struct Args {
    /// Scratch directory for datasets and runs.
    #[arg(long, default_value = "target/acceptance")]
    work: PathBuf,
    /// Generator steps per training run.
    #[arg(long, default_value_t = 4000)]
    steps: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long)]
    full: Option<PathBuf>,
    #[arg(long)]
    ablation_a: Option<PathBuf>,
    #[arg(long)]
    ablation_b: Option<PathBuf>,
    /// Only run the training-free criteria.
    #[arg(long)]
    quick: bool,
}

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = dlgan::Result<Outcome>;

fn report(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let (pass, detail) = match out {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = limit.is_none_or(|l| took <= l);
    let ok = pass && in_time;
    let budget = limit.map(|l| format!(" limit {:.0}s", l.as_secs_f64())).unwrap_or_default();
    println!(
        "{} {name}: {detail} ({:.1}s{budget})",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    ok
}

fn label_algebra() -> Check {
    let s = LabelSchema::synthetic_shapes();
    let random = s.enumerate(LabelKind::Random, None)?;
    let complete: Vec<&LabelVector> = random.iter().filter(|v| s.is_complete(v).unwrap_or(false)).collect();
    let mut ok = random.len() == 36 && complete.len() == 12;
    let mut matching_sizes = BTreeSet::new();
    for gt in &complete {
        let m = s.enumerate(LabelKind::Matching, Some(gt))?;
        matching_sizes.insert(m.len());
        for y in &m {
            ok &= s.is_matching(y, gt)?;
        }
        for y in &random {
            let f = s.fill(y, gt)?;
            ok &= s.is_complete(&f)? && s.fill(&f, gt)? == f;
            ok &= s.group_values(&f)?.iter().zip(s.group_values(y)?).zip(s.group_values(gt)?).all(
                |((fv, yv), gv)| *fv == yv.or(gv),
            );
        }
        ok &= s.fill(&s.empty(), gt)? == **gt;
    }
    for y in &random {
        ok &= s.encode(&s.decode(y)?)? == *y && s.parse_bits(&y.to_string())? == *y;
    }
    ok &= matching_sizes == BTreeSet::from([8]);
    Ok(Outcome {
        pass: ok,
        detail: format!("random {} matching {:?} round trips over all labels", random.len(), matching_sizes),
    })
}

const TOY_SIDE: usize = 4;

/// conv3x3 → tanh → full-map conv to `outs` channels.
struct Toy {
    c1: Conv2d,
    c2: Conv2d,
}

impl Toy {
    fn new(outs: usize) -> Self {
        Self {
            c1: Conv2d::new("toy.c1", 2, 3, 3, 1, 1),
            c2: Conv2d::new("toy.c2", 3, outs, 1, 1, 0).with_kernel(TOY_SIDE, TOY_SIDE),
        }
    }

    fn store(&self, seed: u64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.c1.init(&mut s, 0.5, &mut rng);
        self.c2.init(&mut s, 0.5, &mut rng);
        for name in s.names_with_prefix("toy.") {
            let t = s.param_mut(&name).expect("param");
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        s
    }

    fn forward(&self, ctx: &mut Ctx<'_, f64>, x: Var) -> dlgan_core::Result<Var> {
        let h = self.c1.forward(ctx, x)?;
        let h = ctx.graph.tanh(h);
        let o = self.c2.forward(ctx, h)?;
        let (b, n) = (ctx.graph.shape(x)[0], ctx.graph.shape(o)[1]);
        Ok(ctx.graph.reshape(o, &[b, n]))
    }

    fn scores(&self, ctx: &mut Ctx<'_, f64>, x: Var) -> dlgan_core::Result<Var> {
        let o = self.forward(ctx, x)?;
        let b = ctx.graph.shape(o)[0];
        Ok(ctx.graph.reshape(o, &[b]))
    }
}

fn toy_input(seed: u64, b: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[b, 2, TOY_SIDE, TOY_SIDE], |_| rng.gen_range(-1.0..1.0))
}

/// Relative error between analytic and central-difference parameter gradients.
fn gradient_error<F>(store: &ParamStore<f64>, loss: F) -> dlgan_core::Result<f64>
where
    F: Fn(&mut Ctx<'_, f64>) -> dlgan_core::Result<Var>,
{
    let mut ctx = Ctx::new(store, Mode::Train, &["toy."]);
    let l = loss(&mut ctx)?;
    let tracked = ctx.tracked_params();
    let vars: Vec<Var> = tracked.iter().map(|(_, v)| *v).collect();
    let grads = ctx.graph.grad(l, &vars);
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for ((name, _), gv) in tracked.iter().zip(&grads) {
        let n = store.param(name).expect("param").len();
        let ga = gv.map(|v| ctx.graph.value(v).data().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        for (i, a) in ga.iter().enumerate() {
            let eval = |delta: f64| -> dlgan_core::Result<f64> {
                let mut s = store.clone();
                s.param_mut(name).expect("param").data_mut()[i] += delta;
                let mut c = Ctx::new(&s, Mode::Train, &["toy."]);
                let l = loss(&mut c)?;
                Ok(c.graph.value(l).item())
            };
            let num = (eval(1e-5)? - eval(-1e-5)?) / 2e-5;
            diff += (a - num).powi(2);
            na += a * a;
            nn += num * num;
        }
    }
    Ok(diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-300))
}

fn shapes_label(s: &LabelSchema, bits: &str) -> LabelVector {
    s.parse_bits(bits).expect("valid bits")
}

fn loss_correctness() -> Check {
    let schema = LabelSchema::synthetic_shapes();
    let mut errors: Vec<(&str, f64)> = Vec::new();

    let toy = Toy::new(7);
    let store = toy.store(1);
    let x = toy_input(2, 3);
    let targets: Vec<LabelVector> =
        ["1001010", "0100101", "0011001"].iter().map(|b| shapes_label(&schema, b)).collect();
    errors.push((
        "label",
        gradient_error(&store, |ctx| {
            let xv = ctx.input(x.clone());
            let logits = toy.forward(ctx, xv)?;
            label_loss(&mut ctx.graph, &schema, logits, &targets)
        })?,
    ));

    let toy = Toy::new(5);
    let store = toy.store(3);
    let x = toy_input(4, 3);
    let target = Tensor::from_fn(&[3, 5], |i| ((i * 7 % 11) as f64 - 5.0) * 0.7);
    type L1 = fn(&mut Graph<f64>, Var, Var) -> dlgan_core::Result<Var>;
    let l1s: [(&str, L1); 3] =
        [("cyc", cycle_loss), ("rec", identity_reconstruction_loss), ("latent", latent_regression_loss)];
    for (name, f) in l1s {
        errors.push((
            name,
            gradient_error(&store, |ctx| {
                let xv = ctx.input(x.clone());
                let out = toy.forward(ctx, xv)?;
                let t = ctx.input(target.clone());
                f(&mut ctx.graph, out, t)
            })?,
        ));
    }

    let toy = Toy::new(8);
    let store = toy.store(5);
    let x = toy_input(6, 2);
    errors.push((
        "kl",
        gradient_error(&store, |ctx| {
            let xv = ctx.input(x.clone());
            let out = toy.forward(ctx, xv)?;
            let m = ctx.graph.slice(out, 1, 0, 4);
            let lv = ctx.graph.slice(out, 1, 4, 4);
            kl_loss(&mut ctx.graph, m, lv)
        })?,
    ));

    let store = toy.store(7);
    let (real, fake) = (toy_input(8, 2), toy_input(9, 2));
    let mix_targets = vec![shapes_label(&schema, "1000110"), shapes_label(&schema, "0011001")];
    errors.push((
        "adv",
        gradient_error(&store, |ctx| {
            let rv = ctx.input(real.clone());
            let fv = ctx.input(fake.clone());
            let ro = toy.forward(ctx, rv)?;
            let fo = toy.forward(ctx, fv)?;
            let g = &mut ctx.graph;
            let rs = g.slice(ro, 1, 0, 1);
            let rs = g.reshape(rs, &[2]);
            let fs = g.slice(fo, 1, 0, 1);
            let fs = g.reshape(fs, &[2]);
            let fl = g.slice(fo, 1, 1, 7);
            let d = critic_adversarial(g, rs, fs);
            let (lc, ac) = part_c_losses(g, &schema, fs, fl, &mix_targets)?;
            let s = g.add(d, lc);
            Ok(g.add(s, ac))
        })?,
    ));

    let toy = Toy::new(1);
    let store = toy.store(11);
    let (real, fake) = (toy_input(12, 3), toy_input(13, 3));
    errors.push((
        "gp",
        gradient_error(&store, |ctx| {
            gradient_penalty(ctx, &real, &fake, &[0.2, 0.5, 0.9], |c, v| toy.scores(c, v))
        })?,
    ));

    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);

    let one = LabelSchema::new([("g", vec!["a", "b", "c"])])?;
    let mut g = Graph::<f64>::new();
    let logits = g.constant(Tensor::zeros(&[4, 3]));
    let ce = label_loss(&mut g, &one, logits, &vec![one.parse_bits("010")?; 4])?;
    let ce_err = (g.value(ce).item() - 3f64.ln()).abs();

    let m = g.constant(Tensor::ones(&[5, 16]));
    let lv = g.constant(Tensor::zeros(&[5, 16]));
    let kl = kl_loss(&mut g, m, lv)?;
    let kl_err = (g.value(kl).item() - 8.0).abs();

    let empty = ParamStore::<f64>::new();
    let (real, fake) = (toy_input(1, 3), toy_input(2, 3));
    let per = real.len() / 3;
    let w: Vec<f64> = (0..per).map(|i| (i as f64 + 1.0).sin()).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit = Tensor::from_vec(&[per, 1], w.iter().map(|v| v / norm).collect())?;
    let mut ctx = Ctx::new(&empty, Mode::Eval, &[]);
    let gp = gradient_penalty(&mut ctx, &real, &fake, &[0.1, 0.4, 0.8], |c, x| {
        let flat = c.graph.reshape(x, &[3, per]);
        let wv = c.graph.constant(unit.clone());
        let s = c.graph.matmul(flat, wv);
        Ok(c.graph.reshape(s, &[3]))
    })?;
    let gp_err = ctx.graph.value(gp).item().abs();

    let spot = ce_err.max(kl_err).max(gp_err);
    let named: Vec<String> = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    Ok(Outcome {
        pass: worst < 1e-4 && spot < 1e-6,
        detail: format!("gradient rel err max {worst:.1e} [{}]; spot err CE {ce_err:.1e} KL {kl_err:.1e} GP {gp_err:.1e}", named.join(", ")),
    })
}

fn gaussian(n: usize, d: usize, shift: &[f64], seed: u64) -> dlgan_core::Result<FeatureSet> {
    let z: Tensor<f64> = standard_normal(&[n, d], &mut ChaCha8Rng::seed_from_u64(seed));
    let f = z.data().iter().enumerate().map(|(i, v)| v + shift[i % d]).collect();
    FeatureSet::new(f, n, d, "acceptance")
}

fn correlated(n: usize, d: usize, seed: u64) -> dlgan_core::Result<FeatureSet> {
    let a: Tensor<f64> = standard_normal(&[d, d], &mut ChaCha8Rng::seed_from_u64(seed));
    let base = gaussian(n, d, &vec![0.3; d], seed + 1)?;
    let mut f = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            f[i * d + j] = (0..d).map(|k| base.row(i)[k] * a.data()[k * d + j]).sum();
        }
    }
    FeatureSet::new(f, n, d, "acceptance")
}

fn eigen_fid(a: &FeatureSet, b: &FeatureSet) -> f64 {
    let d = a.d;
    let ca = DMatrix::from_row_slice(d, d, &a.covariance()) + DMatrix::identity(d, d) * 1e-6;
    let cb = DMatrix::from_row_slice(d, d, &b.covariance()) + DMatrix::identity(d, d) * 1e-6;
    let mean: f64 = a.mean().iter().zip(b.mean()).map(|(x, y)| (x - y).powi(2)).sum();
    let cross: f64 = (&ca * &cb).complex_eigenvalues().iter().map(|l| l.re.max(0.0).sqrt()).sum();
    mean + ca.trace() + cb.trace() - 2.0 * cross
}

fn direct_mmd(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let k = |a: &[f64], b: &[f64]| (a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / a.len() as f64 + 1.0).powi(3);
    let (m, n) = (x.len() as f64, y.len() as f64);
    let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
    for (i, a) in x.iter().enumerate() {
        for (j, b) in x.iter().enumerate() {
            if i != j {
                xx += k(a, b);
            }
        }
    }
    for (i, a) in y.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            if i != j {
                yy += k(a, b);
            }
        }
    }
    for a in x {
        for b in y {
            xy += k(a, b);
        }
    }
    xx / (m * (m - 1.0)) + yy / (n * (n - 1.0)) - 2.0 * xy / (m * n)
}

fn metric_oracles() -> Check {
    let mut fid_err: f64 = 0.0;
    for seed in 0..5 {
        let (a, b) = (correlated(400, 8, 10 + seed)?, correlated(400, 8, 20 + seed)?);
        let (ours, want) = (fid(&a, &b)?, eigen_fid(&a, &b));
        fid_err = fid_err.max((ours - want).abs() / want.max(1.0));
    }
    let shifted = fid(&gaussian(100_000, 2, &[0.0, 0.0], 4)?, &gaussian(100_000, 2, &[1.0, 0.0], 5)?)?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mmd_err: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..3).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let fx = FeatureSet::new(x.concat(), 3, 3, "acceptance")?;
        let fy = FeatureSet::new(y.concat(), 3, 3, "acceptance")?;
        let want = direct_mmd(&x, &y);
        let single = mmd2_unbiased(&fx, &[0, 1, 2], &fy, &[0, 1, 2])?;
        let est = kid(&fx, &fy, 4, 3, &mut rng)?;
        mmd_err = mmd_err.max((single - want).abs()).max((est.mean - want).abs());
    }
    Ok(Outcome {
        pass: fid_err < 1e-5 && (shifted - 1.0).abs() <= 0.05 && mmd_err <= 1e-9,
        detail: format!("FID vs eigen oracle {fid_err:.1e}; unit shift FID {shifted:.4}; KID vs direct MMD {mmd_err:.1e}"),
    })
}

fn tiny_model(side: usize) -> ModelConfig {
    ModelConfig {
        encoder_base_channels: 4,
        content_channels: 8,
        attribute_dim: 4,
        content_res_blocks: 1,
        attribute_res_blocks: 1,
        generator_res_blocks: 1,
        critic_base_channels: 4,
        critic_layers: 2,
        init_std: 0.2,
        ..ModelConfig::desk(side, side)
    }
}

fn mechanism_identities() -> Check {
    let bundle = init_bundle(ModelConfig::desk(32, 32), LabelSchema::synthetic_shapes(), 3)?;
    let m = Manipulator::new(&bundle);
    let data = synth(32, 12, 5)?;
    let x = data.batch(&[0, 1, 2, 3])?;
    let xa = data.batch(&[4, 5, 6, 7])?;
    let xb = data.batch(&[8, 9, 10, 11])?;
    let s = &bundle.schema;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<LabelVector> = (0..4).map(|_| s.sample_random(&Default::default(), &mut rng)).collect();

    let interp = m.interpolate(&x.images, &xa.images, &xb.images, &[0.0, 1.0], &y)?;
    let app1 = interp[0] == m.hybrid(&x.images, &xa.images, &y)? && interp[1] == m.hybrid(&x.images, &xb.images, &y)?;
    let app3 = m.hybrid(&x.images, &x.images, &y)? == m.label_only(&x.images, &y)?;

    let filled: Vec<LabelVector> = x.labels.iter().map(|gt| s.fill(&s.empty(), gt)).collect::<Result<_, _>>()?;
    let same_labels = filled == x.labels;
    let out = m.label_only(&x.images, &vec![s.empty(); 4])?;
    let ctx_store = &bundle.params;
    let loss_for = |targets: &[LabelVector]| -> dlgan_core::Result<f32> {
        let mut ctx = Ctx::new(ctx_store, Mode::Eval, &[]);
        let v = ctx.input(out.clone());
        let o = bundle.critic.forward(&mut ctx, v)?;
        let l = label_loss(&mut ctx.graph, s, o.labels, targets)?;
        Ok(ctx.graph.value(l).item())
    };
    let fill_loss = loss_for(&filled)?.to_bits() == loss_for(&x.labels)?.to_bits();
    Ok(Outcome {
        pass: app1 && app3 && same_labels && fill_loss,
        detail: format!(
            "interpolation endpoints = hybrids {app1}; hybrid(x, x) = label-only {app3}; empty-filled targets = ground truth {}",
            same_labels && fill_loss
        ),
    })
}

fn synth(side: usize, n: usize, seed: u64) -> dlgan::Result<Dataset> {
    let spec = SynthSpec { height: side, width: side, jitter: if side >= 32 { 3 } else { 0 }, seed };
    let recs = dlgan_core::synth::synth_dataset(&spec, n, &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(Dataset::new(LabelSchema::synthetic_shapes(), recs)?)
}

fn determinism(work: &Path) -> Check {
    let data = synth(16, 16, 2)?;
    let cfg = TrainConfig {
        batch_size: 4,
        n_critic: 2,
        max_generator_steps: Some(4),
        checkpoint_every: 0,
        sample_every: 0,
        seed: 11,
        ..TrainConfig::default()
    };
    let mut logs = Vec::new();
    for i in 0..2 {
        let out = work.join(format!("replay_{i}"));
        let _ = std::fs::remove_dir_all(&out);
        let bundle = init_bundle(tiny_model(16), data.schema.clone(), 5)?;
        fit(bundle, &data, &cfg, &out, |_| {})?;
        logs.push(std::fs::read(out.join("losses.jsonl")).map_err(|e| dlgan::AppError::io(&out, e))?);
    }
    let losses_same = logs[0] == logs[1] && !logs[0].is_empty();

    let bundle = init_bundle(tiny_model(16), data.schema.clone(), 6)?;
    let state = AppState::loaded(bundle, &ServiceConfig::default());
    let app = router(state, None)?;
    let b64 = |t: &Tensor<f32>| -> dlgan::Result<String> {
        Ok(base64::engine::general_purpose::STANDARD.encode(encode_png(t)?))
    };
    let img = b64(&data.records[0].image)?;
    let r = b64(&data.records[1].image)?;
    let requests = [
        serde_json::json!({"mode": "label_only", "image_b64": img, "label_bits": "0100000"}),
        serde_json::json!({"mode": "hybrid", "image_b64": img, "reference_b64": r, "label_bits": "0000000"}),
        serde_json::json!({"mode": "interpolate", "image_b64": img, "reference_a_b64": r, "reference_b_b64": img,
                           "t_list": [0.0, 0.5, 1.0], "label_bits": "0000010"}),
        serde_json::json!({"mode": "stochastic", "image_b64": img, "label_bits": "0010000", "n_samples": 3, "seed": 42}),
    ];
    let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().map_err(|e| dlgan::AppError::io(work, e))?;
    let mut images_same = true;
    for req in &requests {
        let mut bodies = Vec::new();
        for _ in 0..2 {
            let body = rt.block_on(async {
                let resp = app
                    .clone()
                    .oneshot(
                        Request::post("/v1/manipulate")
                            .header("content-type", "application/json")
                            .body(Body::from(req.to_string()))
                            .expect("request"),
                    )
                    .await
                    .expect("infallible");
                let ok = resp.status() == StatusCode::OK;
                let bytes = resp.into_body().collect().await.expect("body").to_bytes();
                (ok, bytes)
            });
            bodies.push(body);
        }
        let images = |b: &axum::body::Bytes| -> Option<serde_json::Value> {
            serde_json::from_slice::<serde_json::Value>(b).ok().map(|v| v["images_b64"].clone())
        };
        images_same &= bodies.iter().all(|b| b.0)
            && images(&bodies[0].1).is_some_and(|v| v.as_array().is_some_and(|a| !a.is_empty()))
            && images(&bodies[0].1) == images(&bodies[1].1);
    }
    Ok(Outcome {
        pass: losses_same && images_same,
        detail: format!("replayed losses.jsonl identical {losses_same}; replayed service images identical {images_same}"),
    })
}

struct Datasets {
    train: Dataset,
    held: Dataset,
}

fn datasets(work: &Path) -> dlgan::Result<Datasets> {
    let load = |name: &str, n: usize, seed: u64| -> dlgan::Result<Dataset> {
        let dir = work.join(name);
        if !dir.join("labels.jsonl").exists() {
            write_synthetic(&dir, &SynthSpec { seed, ..SynthSpec::default() }, n)?;
        }
        load_labeled_folder(&dir)
    };
    Ok(Datasets { train: load("data", 2000, 0)?, held: load("held", 400, 1)? })
}

fn trained(
    given: &Option<PathBuf>,
    name: &str,
    ablation: &[Ablation],
    data: &Dataset,
    args: &Args,
) -> dlgan::Result<ModelBundle<f32>> {
    if let Some(dir) = given {
        return Ok(checkpoint::load(dir)?.0);
    }
    let n_critic = TrainConfig::default().n_critic;
    let per_epoch = data.len() / args.batch_size;
    let cfg = TrainConfig {
        batch_size: args.batch_size,
        epochs: (args.steps * (n_critic + 1)).div_ceil(per_epoch.max(1)),
        max_generator_steps: Some(args.steps),
        checkpoint_every: 1000,
        sample_every: 500,
        ablation: ablation.iter().copied().collect(),
        ..TrainConfig::default()
    };
    let bundle = init_bundle(ModelConfig::desk(data.height, data.width), data.schema.clone(), 0)?;
    let out = args.work.join(name);
    let start = Instant::now();
    let summary = fit(bundle, data, &cfg, &out, |l| {
        if l.step % 250 == 0 {
            eprintln!("  [{name}] step {} {:.0}s", l.step, start.elapsed().as_secs_f64());
        }
    })?;
    eprintln!("  [{name}] checkpoint {}", summary.final_checkpoint.display());
    Ok(summary.bundle)
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(" "))
}

fn end_to_end(full: &ModelBundle<f32>, d: &Datasets) -> Check {
    let m = Manipulator::new(full);
    let oracle = shapes_oracle(d.held.height, d.held.width);
    let (x, x_r) = pairs(&d.held)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let change = single_group_change(&m, &oracle, &x, &mut rng)?;
    let priority = label_priority(&m, &oracle, &x, &x_r, &mut rng)?;
    let probe = disentanglement_probe(full, &d.held)?;
    let sweep = color_sweep(&m, &oracle, &d.held, EvalConfig::default().sweeps)?;
    let a = change.iter().all(|v| *v >= 0.9);
    let b = priority.iter().all(|v| *v >= 0.9);
    let c = probe.attr_probe_accuracy.iter().all(|v| *v >= 0.95)
        && probe.content_probe_accuracy.iter().zip(&probe.chance_levels).all(|(v, ch)| *v <= ch + 0.15);
    let dd = sweep.mean_monotone;
    let verdict = |p: bool| if p { "ok" } else { "fail" };
    Ok(Outcome {
        pass: a && b && c && dd,
        detail: format!(
            "(a) change {} {}; (b) priority {} {}; (c) attribute probe {} content probe {} chance {} {}; (d) sweep {} {}",
            fmt(&change),
            verdict(a),
            fmt(&priority),
            verdict(b),
            fmt(&probe.attr_probe_accuracy),
            fmt(&probe.content_probe_accuracy),
            fmt(&probe.chance_levels),
            verdict(c),
            fmt(&sweep.mean_curve),
            verdict(dd)
        ),
    })
}

fn ablation_ordering(full: &ModelBundle<f32>, a: &ModelBundle<f32>, b: &ModelBundle<f32>, d: &Datasets) -> Check {
    let cfg = EvalConfig::default();
    let extractor = train_extractor(&d.train, &cfg)?;
    let real = d.held.batch(&(0..d.held.len()).collect::<Vec<_>>())?;
    let oracle = shapes_oracle(d.held.height, d.held.width);
    let (x, x_r) = pairs(&d.held)?;
    let mut fids = Vec::new();
    let mut transfer = Vec::new();
    for bundle in [full, a, b] {
        let m = Manipulator::new(bundle);
        fids.push(image_quality(&m, &extractor, &real, &cfg)?[0].value);
        let t = attribute_transfer(&m, &oracle, &x, &x_r)?;
        transfer.push(t.iter().sum::<f64>() / t.len() as f64);
    }
    let fid_order = fids[0] < fids[1] && fids[0] < fids[2];
    let gap = transfer[0] - transfer[2];
    Ok(Outcome {
        pass: fid_order && gap >= 0.10,
        detail: format!(
            "FID full {:.3} A {:.3} B {:.3}; transfer full {:.3} B {:.3} (gap {:.1} points) extractor {}",
            fids[0],
            fids[1],
            fids[2],
            transfer[0],
            transfer[2],
            gap * 100.0,
            extractor.id
        ),
    })
}

fn main() {
    let args = Args::parse();
    if let Err(e) = std::fs::create_dir_all(&args.work) {
        eprintln!("cannot create {}: {e}", args.work.display());
        std::process::exit(2);
    }
    let mut all = true;
    all &= report("label algebra", Some(Duration::from_secs(1)), label_algebra);
    all &= report("loss correctness", Some(Duration::from_secs(60)), loss_correctness);
    all &= report("metric oracles", Some(Duration::from_secs(120)), metric_oracles);
    all &= report("mechanism identities", Some(Duration::from_secs(60)), mechanism_identities);
    all &= report("determinism", None, || determinism(&args.work));

    if !args.quick {
        let run = || -> dlgan::Result<(Datasets, [ModelBundle<f32>; 3])> {
            let d = datasets(&args.work)?;
            let full = trained(&args.full, "full", &[], &d.train, &args)?;
            let a = trained(&args.ablation_a, "ablation_a", &[Ablation::A], &d.train, &args)?;
            let b = trained(&args.ablation_b, "ablation_b", &[Ablation::B], &d.train, &args)?;
            Ok((d, [full, a, b]))
        };
        match run() {
            Ok((d, [full, a, b])) => {
                all &= report("end-to-end desk training", None, || end_to_end(&full, &d));
                all &= report("ablation ordering", None, || ablation_ordering(&full, &a, &b, &d));
            }
            Err(e) => {
                println!("FAIL end-to-end desk training: error: {e}");
                println!("FAIL ablation ordering: error: {e}");
                all = false;
            }
        }
    }
    std::process::exit(if all { 0 } else { 1 });
}
