use dlgan_core::data::{BatchIterator, Dataset};
use dlgan_core::label::LabelSchema;
use dlgan_core::model::{ModelBundle, ModelConfig, ATTRIBUTE_PREFIX, CONTENT_PREFIX, CRITIC_PREFIX, GENERATOR_PREFIX};
use dlgan_core::synth::{synth_dataset, SynthSpec};
use dlgan_core::train::{Ablation, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        encoder_base_channels: 4,
        content_channels: 8,
        attribute_dim: 4,
        content_res_blocks: 1,
        attribute_res_blocks: 1,
        generator_res_blocks: 1,
        critic_base_channels: 4,
        critic_layers: 2,
        ..ModelConfig::desk(16, 16)
    }
}

fn dataset(n: usize) -> Dataset {
    let spec = SynthSpec { height: 16, width: 16, jitter: 0, seed: 3 };
    let records = synth_dataset(&spec, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    Dataset::new(LabelSchema::synthetic_shapes(), records).unwrap()
}

fn trainer(config: TrainConfig) -> Trainer<f32> {
    let bundle =
        ModelBundle::new(tiny_config(), LabelSchema::synthetic_shapes(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    Trainer::new(bundle, config).unwrap()
}

fn small_train() -> TrainConfig {
    TrainConfig { batch_size: 4, n_critic: 2, lr: 1e-3, ..TrainConfig::default() }
}

#[test]
fn critic_step_only_moves_critic_parameters() {
    let data = dataset(8);
    let mut t = trainer(small_train());
    let before = t.bundle.params.clone();
    t.discriminator_step(&data.batch(&[0, 1, 2, 3]).unwrap()).unwrap();
    for p in [CONTENT_PREFIX, ATTRIBUTE_PREFIX, GENERATOR_PREFIX] {
        assert_eq!(t.bundle.params.distance_sq(&before, p), 0.0, "{p} moved");
    }
    assert!(t.bundle.params.distance_sq(&before, CRITIC_PREFIX) > 0.0);
}

#[test]
fn generator_step_only_moves_encoders_and_generator() {
    let data = dataset(8);
    let mut t = trainer(small_train());
    let before = t.bundle.params.clone();
    t.generator_step(&data.batch(&[0, 1, 2, 3]).unwrap()).unwrap();
    assert_eq!(t.bundle.params.distance_sq(&before, CRITIC_PREFIX), 0.0);
    for p in [CONTENT_PREFIX, ATTRIBUTE_PREFIX, GENERATOR_PREFIX] {
        assert!(t.bundle.params.distance_sq(&before, p) > 0.0, "{p} did not move");
    }
    assert_eq!(t.generator_steps(), 1);
}

#[test]
fn ablations_zero_their_terms() {
    let data = dataset(8);
    let batch = data.batch(&[0, 1, 2, 3]).unwrap();
    let cases = [
        (Ablation::A, vec!["rec", "KL"]),
        (Ablation::B, vec!["latent"]),
        (Ablation::C, vec!["adv_prime", "label_G_prime"]),
    ];
    let full = trainer(small_train()).generator_step(&batch).unwrap().report;
    for (name, v) in full.terms() {
        assert!(v.is_finite(), "{name}");
    }
    for (part, zeroed) in cases {
        let cfg = TrainConfig { ablation: [part].into_iter().collect(), ..small_train() };
        let d = trainer(cfg.clone()).discriminator_step(&batch).unwrap();
        let art = trainer(cfg).generator_step(&batch).unwrap();
        for (name, v) in art.report.terms() {
            if zeroed.contains(&name) {
                assert_eq!(v, 0.0, "{part:?} left {name} = {v}");
            } else if ["total_G", "total_D", "label_D"].contains(&name) {
                continue;
            } else {
                assert_eq!(v, full.terms().into_iter().find(|(n, _)| *n == name).unwrap().1, "{name}");
            }
        }
        if part == Ablation::C {
            assert_eq!(d.adv_prime, 0.0);
        }
    }
}

#[test]
fn total_matches_weighted_terms() {
    let data = dataset(8);
    let mut t = trainer(small_train());
    let art = t.generator_step(&data.batch(&[4, 5, 6, 7]).unwrap()).unwrap();
    let r = art.report;
    let w = t.config.weights;
    let expect = r.adv
        + r.adv_prime
        + w.label_g * (r.label_g + r.label_g_prime)
        + w.cyc * r.cyc
        + w.rec * r.rec
        + w.latent * r.latent
        + w.kl * r.kl;
    assert!((r.total_g - expect).abs() < 1e-9 * expect.abs().max(1.0));
}

#[test]
fn label_targets_fill_from_ground_truth() {
    let data = dataset(8);
    let schema = data.schema.clone();
    let batch = data.batch(&[0, 1, 2, 3]).unwrap();
    let mut t = trainer(small_train());
    let art = t.generator_step(&batch).unwrap();
    let b = batch.len();
    for i in 0..b {
        let gt = &batch.labels[i];
        let rolled = &batch.labels[(i + 1) % b];
        assert!(schema.is_complete(&art.targets[i]).unwrap());
        assert!(schema.is_matching(&art.y_m[i], gt).unwrap());
        let r = schema.group_values(&art.y_r[i]).unwrap();
        let tgt = schema.group_values(&art.targets[i]).unwrap();
        let mix = schema.group_values(&art.mixing_targets[i]).unwrap();
        let g = schema.group_values(gt).unwrap();
        let rg = schema.group_values(rolled).unwrap();
        for k in 0..schema.num_groups() {
            assert_eq!(tgt[k], r[k].or(g[k]));
            assert_eq!(mix[k], r[k].or(rg[k]));
        }
    }
    assert_eq!(art.x_bar.shape(), batch.images.shape());
    assert_eq!(art.x_hat_c.shape(), batch.images.shape());
}

#[test]
fn same_seed_replays_exactly() {
    let data = dataset(16);
    let run = || {
        let mut t = trainer(small_train());
        let mut it = BatchIterator::new(data.len(), 4, 9).unwrap();
        let reports: Vec<_> = (0..2).map(|_| t.iteration(&data, &mut it).unwrap().report).collect();
        (reports, t.bundle.params)
    };
    let (ra, pa) = run();
    let (rb, pb) = run();
    assert_eq!(ra, rb);
    for p in [CONTENT_PREFIX, ATTRIBUTE_PREFIX, GENERATOR_PREFIX, CRITIC_PREFIX] {
        assert_eq!(pa.distance_sq(&pb, p), 0.0);
    }
    let mut other = trainer(TrainConfig { seed: 1, ..small_train() });
    let mut it = BatchIterator::new(data.len(), 4, 9).unwrap();
    assert_ne!(other.iteration(&data, &mut it).unwrap().report, ra[0]);
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig { lr: 2e-4, epochs: 10, decay_start_fraction: 0.5, ..TrainConfig::default() };
    assert_eq!(cfg.learning_rate(0.0), 2e-4);
    assert_eq!(cfg.learning_rate(5.0), 2e-4);
    assert!((cfg.learning_rate(7.5) - 1e-4).abs() < 1e-15);
    assert_eq!(cfg.learning_rate(10.0), 0.0);
    assert_eq!(cfg.learning_rate(12.0), 0.0);
    let mut prev = f64::INFINITY;
    for i in 0..=100 {
        let lr = cfg.learning_rate(i as f64 / 10.0);
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn iteration_applies_schedule() {
    let data = dataset(8);
    let cfg = TrainConfig { epochs: 2, decay_start_fraction: 0.5, n_critic: 1, ..small_train() };
    let mut t = trainer(cfg);
    let mut it = BatchIterator::new(data.len(), 4, 0).unwrap();
    let mut lrs = Vec::new();
    for _ in 0..3 {
        t.iteration(&data, &mut it).unwrap();
        lrs.push(t.learning_rate());
    }
    assert_eq!(lrs, [1e-3, 1e-3, 0.0]);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { n_critic: 0, ..TrainConfig::default() },
        TrainConfig { decay_start_fraction: 0.0, ..TrainConfig::default() },
        TrainConfig { lr: -1.0, ..TrainConfig::default() },
        TrainConfig { adam_betas: (1.0, 0.9), ..TrainConfig::default() },
    ];
    for cfg in bad {
        let bundle = ModelBundle::<f32>::new(tiny_config(), LabelSchema::synthetic_shapes(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(Trainer::new(bundle, cfg).is_err());
    }
}

#[test]
fn planned_steps_follow_epochs() {
    let t = trainer(TrainConfig { epochs: 3, n_critic: 5, ..TrainConfig::default() });
    assert_eq!(t.planned_generator_steps(12), 6);
    let t = trainer(TrainConfig { epochs: 3, n_critic: 5, max_generator_steps: Some(2), ..TrainConfig::default() });
    assert_eq!(t.planned_generator_steps(12), 2);
}

#[test]
fn critic_learns_to_separate_real_from_fake() {
    let data = dataset(32);
    let mut t = trainer(TrainConfig { batch_size: 8, lr: 1e-3, ..TrainConfig::default() });
    let mut it = BatchIterator::new(data.len(), 8, 2).unwrap();
    let first: f64 = (0..3).map(|_| t.discriminator_step(&data.batch(&it.next_indices()).unwrap()).unwrap().adv).sum();
    for _ in 0..30 {
        t.discriminator_step(&data.batch(&it.next_indices()).unwrap()).unwrap();
    }
    let last: f64 = (0..3).map(|_| t.discriminator_step(&data.batch(&it.next_indices()).unwrap()).unwrap().adv).sum();
    assert!(last > first, "critic objective went from {first} to {last}");
}
