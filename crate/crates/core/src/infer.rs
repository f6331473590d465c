//! The four manipulation applications over a trained bundle.
//!
//! All take and return image batches `[B, 3, H, W]` in `[-1, 1]`; reference
//! images are matched to inputs by batch position.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::LabelVector;
use crate::model::{sample_code, standard_normal, ModelBundle};
use crate::tensor::{Real, Tensor};

/// How the attribute code of a reference image is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeSource {
    /// Posterior mean; deterministic.
    #[default]
    Mean,
    /// One posterior sample.
    Sample,
}

/// Read-only view of a bundle that runs the applications.
#[derive(Clone, Copy, Debug)]
pub struct Manipulator<'a, T: Real> {
    pub bundle: &'a ModelBundle<T>,
    pub code_source: CodeSource,
}

impl<'a, T: Real> Manipulator<'a, T> {
    pub fn new(bundle: &'a ModelBundle<T>) -> Self {
        Self { bundle, code_source: CodeSource::Mean }
    }

    fn check_labels(&self, x: &Tensor<T>, labels: &[LabelVector]) -> Result<()> {
        let b = x.shape().first().copied().unwrap_or(0);
        if labels.len() != b {
            return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
        }
        for l in labels {
            if l.schema_id() != self.bundle.schema.id() {
                return Err(Error::SchemaMismatch("label does not belong to the model's schema".into()));
            }
        }
        Ok(())
    }

    fn check_pair(&self, x: &Tensor<T>, other: &Tensor<T>, what: &str) -> Result<()> {
        if x.shape() != other.shape() {
            return Err(Error::Shape(format!("{what} has shape {:?}, input has {:?}", other.shape(), x.shape())));
        }
        Ok(())
    }

    /// Attribute code of each image.
    pub fn code<R: Rng + ?Sized>(&self, x: &Tensor<T>, rng: Option<&mut R>) -> Result<Tensor<T>> {
        let code = self.bundle.attribute_encode(x)?;
        match (self.code_source, rng) {
            (CodeSource::Sample, Some(rng)) => Ok(sample_code(&code, rng)),
            (CodeSource::Sample, None) => Err(Error::Config("sampled codes need a random source".into())),
            (CodeSource::Mean, _) => Ok(code.mean),
        }
    }

    fn mean_code(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.code::<rand_chacha::ChaCha8Rng>(x, None)
    }

    /// `G(E_c(x), z, y_r)`.
    pub fn generate_with_code(&self, x: &Tensor<T>, z: &Tensor<T>, y_r: &[LabelVector]) -> Result<Tensor<T>> {
        self.check_labels(x, y_r)?;
        let c = self.bundle.content_encode(x)?;
        self.bundle.generate(&c, z, y_r)
    }

    /// Interpolates the attribute codes of `x_a` and `x_b`:
    /// `z_t = (1 − t)·z_a + t·z_b`, one output batch per `t`.
    pub fn interpolate(
        &self,
        x: &Tensor<T>,
        x_a: &Tensor<T>,
        x_b: &Tensor<T>,
        ts: &[f64],
        y_r: &[LabelVector],
    ) -> Result<Vec<Tensor<T>>> {
        self.check_pair(x, x_a, "x_a")?;
        self.check_pair(x, x_b, "x_b")?;
        self.check_labels(x, y_r)?;
        if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Config(format!("interpolation weight {t} is outside [0, 1]")));
        }
        let za = self.mean_code(x_a)?;
        let zb = self.mean_code(x_b)?;
        let c = self.bundle.content_encode(x)?;
        ts.iter()
            .map(|&t| {
                let (wa, wb) = (T::from_f64(1.0 - t), T::from_f64(t));
                let data = za.data().iter().zip(zb.data()).map(|(a, b)| wa * *a + wb * *b).collect();
                let z = Tensor::from_vec(za.shape(), data)?;
                self.bundle.generate(&c, &z, y_r)
            })
            .collect()
    }

    /// Changes the labelled attributes of `x`, keeping its own attribute code.
    pub fn label_only(&self, x: &Tensor<T>, y_r: &[LabelVector]) -> Result<Tensor<T>> {
        let z = self.mean_code(x)?;
        self.generate_with_code(x, &z, y_r)
    }

    /// Takes attributes from `x_r` except where `y_r` specifies a value.
    pub fn hybrid(&self, x: &Tensor<T>, x_r: &Tensor<T>, y_r: &[LabelVector]) -> Result<Tensor<T>> {
        self.check_pair(x, x_r, "x_r")?;
        let z = self.mean_code(x_r)?;
        self.generate_with_code(x, &z, y_r)
    }

    /// `n` outputs per input with attribute codes drawn from the prior.
    pub fn stochastic<R: Rng + ?Sized>(
        &self,
        x: &Tensor<T>,
        y_r: &[LabelVector],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Tensor<T>>> {
        if n == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        self.check_labels(x, y_r)?;
        let c = self.bundle.content_encode(x)?;
        let shape = [x.shape()[0], self.bundle.config.attribute_dim];
        (0..n)
            .map(|_| {
                let z = standard_normal(&shape, rng);
                self.bundle.generate(&c, &z, y_r)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelSchema;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_out_of_range_weights() {
        let cfg = ModelConfig { content_res_blocks: 1, attribute_res_blocks: 1, generator_res_blocks: 1, ..ModelConfig::desk(16, 16) };
        let b = ModelBundle::<f32>::new(cfg, LabelSchema::synthetic_shapes(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let m = Manipulator::new(&b);
        let x = Tensor::zeros(&[1, 3, 16, 16]);
        let y = [b.schema.empty()];
        assert!(m.interpolate(&x, &x, &x, &[1.5], &y).is_err());
        assert!(m.stochastic(&x, &y, 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(m.label_only(&x, &[]).is_err());
    }
}
