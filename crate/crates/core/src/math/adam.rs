use ndarray::Array2;

use super::param::ParamTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. One moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a ParamTensor>) -> Self {
        let first: Vec<_> = params.into_iter().map(|p| Array2::zeros(p.shape())).collect();
        let second = first.clone();
        Self { config, first, second, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update using the gradients currently stored in `params`.
    ///
    /// All gradients are checked before anything is written, so a NaN
    /// gradient leaves both parameters and state untouched.
    pub fn step<'n, 'p>(&mut self, params: impl IntoIterator<Item = (&'n str, &'p mut ParamTensor)>) -> Result<()> {
        let mut params: Vec<(&str, &mut ParamTensor)> = params.into_iter().collect();
        if params.len() != self.first.len() {
            return Err(Error::DimensionMismatch { expected: self.first.len(), found: params.len() });
        }
        for ((name, p), m) in params.iter().zip(&self.first) {
            if p.shape() != m.dim() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("`{name}` is {:?}, state holds {:?}", p.shape(), m.dim()),
                });
            }
            if p.grad().iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { tensor: name.to_string() });
            }
        }

        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (((_, p), m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let (value, grad) = p.value_and_grad_mut();
            ndarray::Zip::from(value).and(grad).and(m).and(v).for_each(|w, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
