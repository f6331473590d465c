use dlgan_core::infer::{CodeSource, Manipulator};
use dlgan_core::label::{LabelSchema, LabelVector};
use dlgan_core::model::{standard_normal, ModelBundle, ModelConfig};
use dlgan_core::tensor::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bundle(seed: u64) -> ModelBundle<f32> {
    let cfg = ModelConfig {
        encoder_base_channels: 4,
        content_channels: 8,
        attribute_dim: 4,
        content_res_blocks: 1,
        attribute_res_blocks: 1,
        generator_res_blocks: 1,
        critic_base_channels: 4,
        critic_layers: 2,
        // Larger weights so the code actually changes the output.
        init_std: 0.2,
        ..ModelConfig::desk(16, 16)
    };
    ModelBundle::new(cfg, LabelSchema::synthetic_shapes(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn images(b: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    standard_normal::<f32, _>(&[b, 3, 16, 16], &mut rng).map(|v| v.tanh())
}

fn labels(schema: &LabelSchema, b: usize, seed: u64) -> Vec<LabelVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..b).map(|_| schema.sample_random(&Default::default(), &mut rng)).collect()
}

#[test]
fn interpolation_endpoints_are_hybrids() {
    let b = bundle(0);
    let m = Manipulator::new(&b);
    let (x, xa, xb) = (images(2, 1), images(2, 2), images(2, 3));
    let y = labels(&b.schema, 2, 4);
    let out = m.interpolate(&x, &xa, &xb, &[0.0, 0.5, 1.0], &y).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0], m.hybrid(&x, &xa, &y).unwrap());
    assert_eq!(out[2], m.hybrid(&x, &xb, &y).unwrap());
    assert!(out[1].max_abs_diff(&out[0]) > 0.0);
}

#[test]
fn hybrid_with_own_reference_is_label_only() {
    let b = bundle(1);
    let m = Manipulator::new(&b);
    let x = images(3, 5);
    let y = labels(&b.schema, 3, 6);
    assert_eq!(m.hybrid(&x, &x, &y).unwrap(), m.label_only(&x, &y).unwrap());
}

#[test]
fn stochastic_with_replayed_noise_matches_explicit_code() {
    let b = bundle(2);
    let m = Manipulator::new(&b);
    let x = images(2, 7);
    let y = labels(&b.schema, 2, 8);
    let outs = m.stochastic(&x, &y, 3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for out in &outs {
        let z = standard_normal(&[2, 4], &mut rng);
        assert_eq!(*out, m.generate_with_code(&x, &z, &y).unwrap());
    }
    assert!(outs[0].max_abs_diff(&outs[1]) > 0.0);
}

#[test]
fn empty_label_keeps_attributes_from_reference() {
    let b = bundle(3);
    let m = Manipulator::new(&b);
    let (x, xr) = (images(1, 10), images(1, 11));
    let empty = [b.schema.empty()];
    let z = m.code::<ChaCha8Rng>(&xr, None).unwrap();
    assert_eq!(m.hybrid(&x, &xr, &empty).unwrap(), m.generate_with_code(&x, &z, &empty).unwrap());
}

#[test]
fn sampled_codes_need_randomness() {
    let b = bundle(4);
    let mut m = Manipulator::new(&b);
    m.code_source = CodeSource::Sample;
    let x = images(1, 12);
    assert!(m.code::<ChaCha8Rng>(&x, None).is_err());
    let a = m.code(&x, Some(&mut ChaCha8Rng::seed_from_u64(0))).unwrap();
    let c = m.code(&x, Some(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    assert!(a.max_abs_diff(&c) > 0.0);
}

#[test]
fn foreign_schema_labels_are_rejected() {
    let b = bundle(5);
    let m = Manipulator::new(&b);
    let other = LabelSchema::new([("hair", vec!["black", "blond"])]).unwrap();
    let x = images(1, 13);
    assert!(m.label_only(&x, &[other.empty()]).is_err());
    assert!(m.hybrid(&x, &images(2, 14), &labels(&b.schema, 1, 0)).is_err());
}

#[test]
fn outputs_are_in_range_and_batch_independent() {
    let b = bundle(6);
    let m = Manipulator::new(&b);
    let x = images(3, 15);
    let y = labels(&b.schema, 3, 16);
    let all = m.label_only(&x, &y).unwrap();
    assert_eq!(all.shape(), &[3, 3, 16, 16]);
    assert!(all.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    for i in 0..3 {
        let one = m.label_only(&x.rows(i, 1), &y[i..i + 1]).unwrap();
        assert!(one.max_abs_diff(&all.rows(i, 1)) < 1e-5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn interpolation_is_linear_in_the_code(t in 0.0f64..1.0, seed in 0u64..1000) {
        let b = bundle(7);
        let m = Manipulator::new(&b);
        let (x, xa, xb) = (images(1, seed), images(1, seed + 1), images(1, seed + 2));
        let y = labels(&b.schema, 1, seed);
        let out = m.interpolate(&x, &xa, &xb, &[t], &y).unwrap();
        let za = m.code::<ChaCha8Rng>(&xa, None).unwrap();
        let zb = m.code::<ChaCha8Rng>(&xb, None).unwrap();
        let z = Tensor::from_vec(za.shape(), za.data().iter().zip(zb.data())
            .map(|(a, b)| (1.0 - t) as f32 * a + t as f32 * b).collect()).unwrap();
        prop_assert_eq!(&out[0], &m.generate_with_code(&x, &z, &y).unwrap());
    }
}
