//! Adam optimizer with bias correction and stepped learning-rate decay.

use std::collections::BTreeMap;

use super::array::Array;
use super::nn::ParamSet;
use crate::error::{Error, Result};

/// Optimizer state. Moment buffers are keyed by parameter name and created
/// lazily on the first step.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` steps.
    pub lr_decay: f64,
    pub decay_every: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            step: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr_decay: 0.7,
            decay_every: 50_000,
            moments: BTreeMap::new(),
        }
    }

    /// Learning rate in effect at a given step count.
    pub fn lr_at(&self, step: u64) -> f64 {
        self.learning_rate * self.lr_decay.powi((step / self.decay_every) as i32)
    }

    /// Learning rate the next `step()` call will use.
    pub fn effective_lr(&self) -> f64 {
        self.lr_at(self.step)
    }

    /// One Adam update over every parameter. Rejects non-finite gradients.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Array>,
    ) -> Result<()> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite gradient for parameter '{name}' at step {}",
                    self.step
                )));
            }
        }
        let lr = self.effective_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != p.shape() {
                return Err(Error::ShapeMismatch {
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                    context: "adam gradient vs parameter",
                });
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; p.numel()], vec![0.0; p.numel()]));
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                pd[i] -= lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
        self.step += 1;
        Ok(())
    }
}
