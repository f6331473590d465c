#![allow(dead_code)]

use dlgan_core::data::Dataset;
use dlgan_core::label::LabelSchema;
use dlgan_core::model::{ModelBundle, ModelConfig};
use dlgan_core::synth::{synth_dataset, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn tiny_model(side: usize) -> ModelConfig {
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

pub fn tiny_bundle(side: usize, seed: u64) -> ModelBundle<f32> {
    let mut b = ModelBundle::new(tiny_model(side), LabelSchema::synthetic_shapes(), &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap();
    b.checkpoint_id = format!("ckpt-test-{seed}");
    b
}

pub fn shapes(side: usize, n: usize, seed: u64) -> Dataset {
    let spec = SynthSpec { height: side, width: side, jitter: 0, seed };
    let recs = synth_dataset(&spec, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    Dataset::new(LabelSchema::synthetic_shapes(), recs).unwrap()
}
