use serde::{Deserialize, Serialize};

use super::{Mlp, MlpGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 2e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        AdamState { config, m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], step: 0 }
    }

    pub fn for_mlp(mlp: &Mlp<T>, config: AdamConfig) -> Self {
        Self::new(mlp.n_params(), config)
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), found: params.len().min(grads.len()) });
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let (b1, b2) = (T::c(beta1), T::c(beta2));
        let c1 = T::one() - b1.powi(self.step.min(i32::MAX as u64) as i32);
        let c2 = T::one() - b2.powi(self.step.min(i32::MAX as u64) as i32);
        let (lr, eps) = (T::c(lr), T::c(eps));
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }

    pub fn update_mlp(&mut self, mlp: &mut Mlp<T>, grads: &MlpGrads<T>) -> Result<()> {
        let mut params = mlp.flatten_params();
        self.update(&mut params, &grads.flatten())?;
        mlp.set_flat_params(&params)
    }
}
