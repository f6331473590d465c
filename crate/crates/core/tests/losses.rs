use dlgan_core::graph::Var;
use dlgan_core::label::{Assignment, LabelSchema, LabelVector};
use dlgan_core::loss::*;
use dlgan_core::nn::{Conv2d, Ctx, Mode, ParamStore};
use dlgan_core::{Graph, Tensor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const H: usize = 4;

/// conv3x3 (2→3) → tanh → conv over the full map to `outs` channels.
struct Toy {
    c1: Conv2d,
    c2: Conv2d,
}

impl Toy {
    fn new(outs: usize) -> Self {
        Self {
            c1: Conv2d::new("toy.c1", 2, 3, 3, 1, 1),
            c2: Conv2d::new("toy.c2", 3, outs, 1, 1, 0).with_kernel(H, H),
        }
    }

    fn store(&self, seed: u64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.c1.init(&mut s, 0.5, &mut rng);
        self.c2.init(&mut s, 0.5, &mut rng);
        for name in s.names_with_prefix("toy.") {
            let t = s.param_mut(&name).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
        s
    }

    /// `[B, outs]`
    fn forward(&self, ctx: &mut Ctx<'_, f64>, x: Var) -> Var {
        let h = self.c1.forward(ctx, x).unwrap();
        let h = ctx.graph.tanh(h);
        let o = self.c2.forward(ctx, h).unwrap();
        let b = ctx.graph.shape(x)[0];
        let n = ctx.graph.shape(o)[1];
        ctx.graph.reshape(o, &[b, n])
    }
}

fn input(seed: u64, b: usize) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(&[b, 2, H, H], |_| rng.gen_range(-1.0..1.0))
}

/// Compares analytic parameter gradients of `loss` with central differences.
fn check<F>(store: &ParamStore<f64>, loss: F) -> f64
where
    F: Fn(&mut Ctx<'_, f64>) -> Var,
{
    let mut ctx = Ctx::new(store, Mode::Train, &["toy."]);
    let l = loss(&mut ctx);
    let tracked = ctx.tracked_params();
    let vars: Vec<Var> = tracked.iter().map(|(_, v)| *v).collect();
    let grads = ctx.graph.grad(l, &vars);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    let step = 1e-5;
    for ((name, _), gv) in tracked.iter().zip(&grads) {
        let n = store.param(name).unwrap().len();
        let ga = match gv {
            Some(v) => ctx.graph.value(*v).data().to_vec(),
            None => vec![0.0; n],
        };
        for i in 0..n {
            let eval = |delta: f64| {
                let mut s = store.clone();
                s.param_mut(name).unwrap().data_mut()[i] += delta;
                let mut c = Ctx::new(&s, Mode::Train, &["toy."]);
                let l = loss(&mut c);
                c.graph.value(l).item()
            };
            numeric.push((eval(step) - eval(-step)) / (2.0 * step));
            analytic.push(ga[i]);
        }
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
    assert!(scale > 1e-8, "degenerate gradient");
    diff / scale
}

fn complete_label(schema: &LabelSchema, c: &str, s: &str, sh: &str) -> LabelVector {
    let mut a = Assignment::new();
    a.insert("color".into(), Some(c.into()));
    a.insert("size".into(), Some(s.into()));
    a.insert("shape".into(), Some(sh.into()));
    schema.encode(&a).unwrap()
}

#[test]
fn label_loss_gradient() {
    let schema = LabelSchema::synthetic_shapes();
    let toy = Toy::new(7);
    let store = toy.store(1);
    let x = input(2, 3);
    let targets = vec![
        complete_label(&schema, "red", "small", "circle"),
        complete_label(&schema, "green", "large", "square"),
        complete_label(&schema, "blue", "small", "square"),
    ];
    let err = check(&store, |ctx| {
        let xv = ctx.input(x.clone());
        let logits = toy.forward(ctx, xv);
        label_loss(&mut ctx.graph, &schema, logits, &targets).unwrap()
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn l1_losses_gradient() {
    let toy = Toy::new(5);
    let store = toy.store(3);
    let x = input(4, 3);
    let target = Tensor::from_fn(&[3, 5], |i| ((i * 7 % 11) as f64 - 5.0) * 0.7);
    type L1 = fn(&mut Graph<f64>, Var, Var) -> dlgan_core::Result<Var>;
    let fns: [L1; 3] = [cycle_loss, identity_reconstruction_loss, latent_regression_loss];
    for f in fns {
        let err = check(&store, |ctx| {
            let xv = ctx.input(x.clone());
            let out = toy.forward(ctx, xv);
            let t = ctx.input(target.clone());
            f(&mut ctx.graph, out, t).unwrap()
        });
        assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn kl_gradient() {
    let toy = Toy::new(8);
    let store = toy.store(5);
    let x = input(6, 2);
    let err = check(&store, |ctx| {
        let xv = ctx.input(x.clone());
        let out = toy.forward(ctx, xv);
        let m = ctx.graph.slice(out, 1, 0, 4);
        let lv = ctx.graph.slice(out, 1, 4, 4);
        kl_loss(&mut ctx.graph, m, lv).unwrap()
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn adversarial_and_part_c_gradients() {
    let schema = LabelSchema::synthetic_shapes();
    let toy = Toy::new(8);
    let store = toy.store(7);
    let (real, fake) = (input(8, 2), input(9, 2));
    let targets = vec![
        complete_label(&schema, "red", "large", "circle"),
        complete_label(&schema, "blue", "small", "square"),
    ];
    let err = check(&store, |ctx| {
        let rv = ctx.input(real.clone());
        let fv = ctx.input(fake.clone());
        let ro = toy.forward(ctx, rv);
        let fo = toy.forward(ctx, fv);
        let g = &mut ctx.graph;
        let rs = g.slice(ro, 1, 0, 1);
        let rs = g.reshape(rs, &[2]);
        let fs = g.slice(fo, 1, 0, 1);
        let fs = g.reshape(fs, &[2]);
        let fl = g.slice(fo, 1, 1, 7);
        let d = critic_adversarial(g, rs, fs);
        let (lc, ac) = part_c_losses(g, &schema, fs, fl, &targets).unwrap();
        let s = g.add(d, lc);
        g.add(s, ac)
    });
    assert!(err < 1e-4, "{err}");
}

fn toy_scores(toy: &Toy, ctx: &mut Ctx<'_, f64>, x: Var) -> dlgan_core::Result<Var> {
    let o = toy.forward(ctx, x);
    let b = ctx.graph.shape(o)[0];
    Ok(ctx.graph.reshape(o, &[b]))
}

#[test]
fn gradient_penalty_gradient() {
    let toy = Toy::new(1);
    let store = toy.store(11);
    let (real, fake) = (input(12, 3), input(13, 3));
    let u = [0.2, 0.5, 0.9];
    let err = check(&store, |ctx| {
        gradient_penalty(ctx, &real, &fake, &u, |c, x| toy_scores(&toy, c, x)).unwrap()
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gradient_penalty_matches_finite_difference_norms() {
    let toy = Toy::new(1);
    let store = toy.store(17);
    let (real, fake) = (input(18, 2), input(19, 2));
    let u = [0.3, 0.7];
    let mut ctx = Ctx::new(&store, Mode::Eval, &[]);
    let gp = gradient_penalty(&mut ctx, &real, &fake, &u, |c, x| toy_scores(&toy, c, x)).unwrap();
    let gp = ctx.graph.value(gp).item();
    let per = real.len() / 2;
    let mixed: Vec<f64> =
        (0..real.len()).map(|i| u[i / per] * real.data()[i] + (1.0 - u[i / per]) * fake.data()[i]).collect();
    let score = |data: &[f64], sample: usize| {
        let mut c = Ctx::new(&store, Mode::Eval, &[]);
        let xv = c.input(Tensor::from_vec(&[2, 2, H, H], data.to_vec()).unwrap());
        let s = toy_scores(&toy, &mut c, xv).unwrap();
        c.graph.value(s).data()[sample]
    };
    let mut expected = 0.0;
    for b in 0..2 {
        let mut sq = 0.0;
        for i in b * per..(b + 1) * per {
            let mut p = mixed.clone();
            p[i] += 1e-6;
            let mut m = mixed.clone();
            m[i] -= 1e-6;
            let d = (score(&p, b) - score(&m, b)) / 2e-6;
            sq += d * d;
        }
        expected += (sq.sqrt() - 1.0).powi(2) / 2.0;
    }
    assert!((gp - expected).abs() / expected < 1e-4, "{gp} vs {expected}");
}

#[test]
fn gradient_penalty_closed_forms() {
    let store = ParamStore::<f64>::new();
    let real = input(1, 3);
    let fake = input(2, 3);
    let per = real.len() / 3;
    let w: Vec<f64> = (0..per).map(|i| (i as f64 + 1.0).sin()).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let unit = Tensor::from_vec(&[per, 1], w.iter().map(|v| v / norm).collect()).unwrap();
    let mut ctx = Ctx::new(&store, Mode::Eval, &[]);
    let gp = gradient_penalty(&mut ctx, &real, &fake, &[0.1, 0.4, 0.8], |c, x| {
        let flat = c.graph.reshape(x, &[3, per]);
        let wv = c.graph.constant(unit.clone());
        let s = c.graph.matmul(flat, wv);
        Ok(c.graph.reshape(s, &[3]))
    })
    .unwrap();
    assert!(ctx.graph.value(gp).item().abs() < 1e-6);

    let mut ctx = Ctx::new(&store, Mode::Eval, &[]);
    let gp = gradient_penalty(&mut ctx, &real, &fake, &[0.1, 0.4, 0.8], |c, x| {
        let z = c.graph.scale(x, 0.0);
        let z = c.graph.reshape(z, &[3, per]);
        let s = c.graph.sum_to(z, &[3, 1]);
        Ok(c.graph.reshape(s, &[3]))
    })
    .unwrap();
    assert!((ctx.graph.value(gp).item() - 1.0).abs() < 1e-6);

    let mut ctx = Ctx::new(&store, Mode::Eval, &[]);
    assert!(gradient_penalty(&mut ctx, &real, &input(3, 2), &[0.5, 0.5], |_, x| Ok(x)).is_err());
}

#[test]
fn gradient_penalty_swap_symmetry() {
    let toy = Toy::new(1);
    let store = toy.store(23);
    let (a, b) = (input(24, 4), input(25, 4));
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let (mut ab, mut ba) = (0.0, 0.0);
    let draws = 400;
    for _ in 0..draws {
        for (x, y, acc) in [(&a, &b, &mut ab), (&b, &a, &mut ba)] {
            let u: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
            let mut ctx = Ctx::new(&store, Mode::Eval, &[]);
            let gp = gradient_penalty(&mut ctx, x, y, &u, |c, v| toy_scores(&toy, c, v)).unwrap();
            *acc += ctx.graph.value(gp).item() / draws as f64;
        }
    }
    assert!((ab - ba).abs() / ab.max(ba) < 0.05, "{ab} vs {ba}");
}

#[test]
fn adversarial_examples() {
    let (g, d) = adversarial_losses(0.7, 0.7, 0.0, 10.0);
    assert_eq!((g, d), (-0.7, 0.0));
    let (_, d) = adversarial_losses(1.0, 0.0, 0.0, 10.0);
    assert_eq!(d, -1.0);
}

#[test]
fn critic_step_increases_wasserstein_gap() {
    let toy = Toy::new(1);
    let mut store = toy.store(29);
    let (real, fake) = (input(30, 8), input(31, 8).map(|v| v * 0.3 + 0.2));
    let gap = |s: &ParamStore<f64>| {
        let mut ctx = Ctx::new(s, Mode::Eval, &[]);
        let (rv, fv) = (ctx.input(real.clone()), ctx.input(fake.clone()));
        let r = toy_scores(&toy, &mut ctx, rv).unwrap();
        let f = toy_scores(&toy, &mut ctx, fv).unwrap();
        let d = critic_adversarial(&mut ctx.graph, r, f);
        -ctx.graph.value(d).item()
    };
    let before = gap(&store);
    let updates = {
        let mut ctx = Ctx::new(&store, Mode::Train, &["toy."]);
        let (rv, fv) = (ctx.input(real.clone()), ctx.input(fake.clone()));
        let r = toy_scores(&toy, &mut ctx, rv).unwrap();
        let f = toy_scores(&toy, &mut ctx, fv).unwrap();
        let d = critic_adversarial(&mut ctx.graph, r, f);
        let tracked = ctx.tracked_params();
        let vars: Vec<Var> = tracked.iter().map(|(_, v)| *v).collect();
        let grads = ctx.graph.grad(d, &vars);
        tracked
            .into_iter()
            .zip(grads)
            .map(|((n, _), g)| (n, ctx.graph.value(g.unwrap()).clone()))
            .collect::<Vec<_>>()
    };
    for (n, g) in updates {
        let p = store.param_mut(&n).unwrap();
        p.data_mut().iter_mut().zip(g.data()).for_each(|(w, g)| *w -= 0.01 * g);
    }
    assert!(gap(&store) > before);
}

#[test]
fn kl_matches_monte_carlo() {
    let mean = [0.3, -0.8, 1.1];
    let lv = [0.2, -0.5, 0.9];
    let mut g = Graph::<f64>::new();
    let m = g.constant(Tensor::from_vec(&[1, 3], mean.to_vec()).unwrap());
    let l = g.constant(Tensor::from_vec(&[1, 3], lv.to_vec()).unwrap());
    let k = kl_loss(&mut g, m, l).unwrap();
    let closed = g.value(k).item();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let mut log_ratio = 0.0;
        for i in 0..3 {
            let e: f64 = rng.sample(StandardNormal);
            let sd = (lv[i] / 2.0f64).exp();
            let z = mean[i] + sd * e;
            log_ratio += -0.5 * e * e - sd.ln() + 0.5 * z * z;
        }
        acc += log_ratio;
    }
    let mc = acc / n as f64;
    assert!((mc - closed).abs() / closed < 0.01, "{mc} vs {closed}");
}

#[test]
fn l1_closed_forms_and_errors() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(Tensor::full(&[2, 3], -1.0));
    let b = g.constant(Tensor::full(&[2, 3], 1.0));
    let l = cycle_loss(&mut g, a, b).unwrap();
    assert_eq!(g.value(l).item(), 2.0);
    let l = identity_reconstruction_loss(&mut g, a, a).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    let z = g.constant(Tensor::zeros(&[1, 16]));
    let o = g.constant(Tensor::ones(&[1, 16]));
    let l = latent_regression_loss(&mut g, z, o).unwrap();
    assert_eq!(g.value(l).item(), 1.0);
    let short = g.constant(Tensor::zeros(&[1, 15]));
    assert!(latent_regression_loss(&mut g, z, short).is_err());
}

#[test]
fn label_loss_rejects_incomplete_target() {
    let schema = LabelSchema::synthetic_shapes();
    let mut g = Graph::<f64>::new();
    let logits = g.constant(Tensor::zeros(&[1, 7]));
    assert!(matches!(
        label_loss(&mut g, &schema, logits, &[schema.empty()]),
        Err(dlgan_core::Error::IncompleteLabel { .. })
    ));
}

#[test]
fn label_loss_vanishes_with_large_margin() {
    let schema = LabelSchema::synthetic_shapes();
    let t = complete_label(&schema, "blue", "large", "square");
    let logits: Vec<f64> = t.bits().iter().map(|b| if *b == 1 { 60.0 } else { -60.0 }).collect();
    let mut g = Graph::<f64>::new();
    let l = g.constant(Tensor::from_vec(&[1, 7], logits).unwrap());
    let v = label_loss(&mut g, &schema, l, &[t]).unwrap();
    assert!(g.value(v).item() < 1e-12);
}

fn recompute_totals(r: &LossReport, w: &LossWeights) -> (f64, f64) {
    let g = w.label_g * r.label_g
        + w.label_g * r.label_g_prime
        + r.adv
        + r.adv_prime
        + w.cyc * r.cyc
        + w.rec * r.rec
        + w.latent * r.latent
        + w.kl * r.kl;
    let d = w.label_d * r.label_d - r.adv - r.adv_prime;
    (g, d)
}

proptest! {
    #[test]
    fn label_loss_shift_invariant(
        logits in proptest::collection::vec(-5.0f64..5.0, 7),
        shift in -20.0f64..20.0,
        group in 0usize..3,
    ) {
        let schema = LabelSchema::synthetic_shapes();
        let t = complete_label(&schema, "green", "small", "circle");
        let (start, len) = schema.group_range(group);
        let mut shifted = logits.clone();
        shifted[start..start + len].iter_mut().for_each(|v| *v += shift);
        let mut g = Graph::<f64>::new();
        let a = g.constant(Tensor::from_vec(&[1, 7], logits).unwrap());
        let b = g.constant(Tensor::from_vec(&[1, 7], shifted).unwrap());
        let la = label_loss(&mut g, &schema, a, &[t.clone()]).unwrap();
        let lb = label_loss(&mut g, &schema, b, &[t]).unwrap();
        let (va, vb) = (g.value(la).item(), g.value(lb).item());
        prop_assert!(va >= 0.0);
        prop_assert!((va - vb).abs() < 1e-9);
    }

    #[test]
    fn kl_nonnegative_zero_only_at_prior(
        m in proptest::collection::vec(-3.0f64..3.0, 4),
        lv in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let mut g = Graph::<f64>::new();
        let mv = g.constant(Tensor::from_vec(&[1, 4], m.clone()).unwrap());
        let lvv = g.constant(Tensor::from_vec(&[1, 4], lv.clone()).unwrap());
        let k = kl_loss(&mut g, mv, lvv).unwrap();
        let v = g.value(k).item();
        prop_assert!(v >= 0.0);
        let off: f64 = m.iter().chain(&lv).map(|x| x * x).sum();
        if off > 1e-6 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn l1_matches_brute_force(
        a in proptest::collection::vec(-1.0f64..1.0, 12),
        b in proptest::collection::vec(-1.0f64..1.0, 12),
    ) {
        let mut g = Graph::<f64>::new();
        let av = g.constant(Tensor::from_vec(&[3, 4], a.clone()).unwrap());
        let bv = g.constant(Tensor::from_vec(&[3, 4], b.clone()).unwrap());
        let l = cycle_loss(&mut g, av, bv).unwrap();
        let mut brute = 0.0;
        for i in 0..12 {
            brute += (a[i] - b[i]).abs();
        }
        prop_assert!((g.value(l).item() - brute / 12.0).abs() < 1e-12);
        prop_assert!(g.value(l).item() >= 0.0);
    }

    #[test]
    fn totals_match_recomputation(parts in proptest::collection::vec(-10.0f64..10.0, 9)) {
        let r = LossReport {
            adv: parts[0],
            adv_prime: parts[1],
            label_d: parts[2].abs(),
            label_g: parts[3].abs(),
            label_g_prime: parts[4].abs(),
            cyc: parts[5].abs(),
            rec: parts[6].abs(),
            kl: parts[7].abs(),
            latent: parts[8].abs(),
            ..Default::default()
        };
        let w = LossWeights::default();
        let (tg, td) = total_losses(&r, &w).unwrap();
        let (eg, ed) = recompute_totals(&r, &w);
        prop_assert!((tg - eg).abs() < 1e-9 && (td - ed).abs() < 1e-9);
    }
}
