//! Adam optimizer with the stepped learning-rate schedule used for all
//! network training in this crate: the base rate decays by a factor of
//! five every five epochs.

use super::tape::AutonetError;
use super::tensor::Tensor2;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    /// One moment pair per parameter tensor, in a fixed order that must
    /// match every later `step` call.
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one Adam update to every parameter tensor.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor2],
        grads: &[&Tensor2],
        lr: f64,
    ) -> Result<(), AutonetError> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        for g in grads {
            if !g.all_finite() {
                return Err(AutonetError::NonFiniteGradient);
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g.data()[i];
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Learning rate for a 0-indexed epoch: `base / 5^(epoch/5)`.
pub fn lr_schedule(base: f64, epoch: usize) -> f64 {
    base / 5f64.powi((epoch / 5) as i32)
}
