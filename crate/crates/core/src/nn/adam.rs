use super::{GradientBundle, ParamSet};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub step_count: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            step_count: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Apply one update. A non-finite gradient aborts before anything is
    /// modified.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P, grads: &GradientBundle) -> Result<()> {
        grads.check_shapes(params)?;
        if self.m.iter().map(Vec::len).ne(grads.tensors.iter().map(Vec::len)) {
            return Err(Error::Shape("optimizer moments do not mirror parameters".into()));
        }
        if !grads.is_finite() {
            return Err(Error::Training {
                step: self.step_count as usize + 1,
                reason: "non-finite gradient".into(),
            });
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps_hat);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
