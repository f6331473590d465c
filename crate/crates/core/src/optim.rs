//! Adam over named parameters.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Real> Adam<T> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        Self { beta1, beta2, eps: 1e-8, step: 0, moments: BTreeMap::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with learning rate `lr` to every named gradient.
    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &[(String, Tensor<T>)], lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let c1 = T::from_f64(1.0 - Float::powi(self.beta1, t));
        let c2 = T::from_f64(1.0 - Float::powi(self.beta2, t));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(self.eps));
        for (name, g) in grads {
            let p = store.param_mut(name)?;
            if p.shape() != g.shape() {
                return Err(Error::Shape(alloc::format!("gradient for {name} has shape {:?}", g.shape())));
            }
            let n = p.len();
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (alloc::vec![T::zero(); n], alloc::vec![T::zero(); n]));
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (T::one() - b1) * *gi;
                *vi = b2 * *vi + (T::one() - b2) * *gi * *gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w = *w - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut store = ParamStore::<f64>::new();
        store.insert_param("w", Tensor::from_vec(&[2], alloc::vec![1.0, -1.0]).unwrap());
        let mut adam = Adam::new(0.5, 0.999);
        let g = Tensor::from_vec(&[2], alloc::vec![3.0, -0.2]).unwrap();
        adam.update(&mut store, &[("w".into(), g)], 0.1).unwrap();
        let w = store.param("w").unwrap().data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::<f64>::new();
        store.insert_param("w", Tensor::from_vec(&[1], alloc::vec![5.0]).unwrap());
        let mut adam = Adam::new(0.9, 0.999);
        for _ in 0..2000 {
            let w = store.param("w").unwrap().item();
            let g = Tensor::from_vec(&[1], alloc::vec![2.0 * (w - 2.0)]).unwrap();
            adam.update(&mut store, &[("w".into(), g)], 0.01).unwrap();
        }
        assert!((store.param("w").unwrap().item() - 2.0).abs() < 1e-2);
    }
}
