//! Adam optimizer with bias correction, plus global-norm gradient clipping.

use crate::scalar::Scalar;
use crate::tensor::ParamSet;
use crate::{Result, TensorError};

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Per-parameter first/second moment estimates and the shared step counter.
pub struct AdamState<S: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &ParamSet<S>, config: AdamConfig) -> Self {
        let m = params.iter().map(|p| vec![S::ZERO; p.tensor.numel()]).collect();
        let v = params.iter().map(|p| vec![S::ZERO; p.tensor.numel()]).collect();
        Self { config, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected update in place and zeroes the gradients.
    /// Every trainable parameter must have a populated gradient.
    pub fn step(&mut self, params: &mut ParamSet<S>) -> Result<()> {
        for p in params.iter() {
            if p.tensor.requires_grad && p.tensor.grad.is_none() {
                return Err(TensorError::State(format!(
                    "adam step with missing gradient for parameter {}",
                    p.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = S::from_f64(self.config.learning_rate);
        let beta1 = S::from_f64(self.config.beta1);
        let beta2 = S::from_f64(self.config.beta2);
        let eps = S::from_f64(self.config.epsilon);
        let one = S::ONE;
        let bc1 = S::from_f64(1.0 - self.config.beta1.powi(t));
        let bc2 = S::from_f64(1.0 - self.config.beta2.powi(t));

        for (idx, p) in params.iter_mut().enumerate() {
            if !p.tensor.requires_grad {
                continue;
            }
            let grad = p.tensor.grad.take().expect("checked above");
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for ((w, g), (mi, vi)) in
                p.tensor.data.iter_mut().zip(&grad).zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = beta1 * *mi + (one - beta1) * *g;
                *vi = beta2 * *vi + (one - beta2) * *g * *g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<S: Scalar>(params: &mut ParamSet<S>, max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for p in params.iter() {
        if let Some(g) = &p.tensor.grad {
            for v in g {
                let x = v.to_f64();
                sq += x * x;
            }
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64(max_norm / norm);
        for p in params.iter_mut() {
            if let Some(g) = &mut p.tensor.grad {
                for v in g {
                    *v *= scale;
                }
            }
        }
    }
    norm
}
