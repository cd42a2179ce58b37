use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NadamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        NadamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl NadamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid Nadam hyperparameters {self:?}")))
        }
    }
}

/// Nesterov-accelerated Adam with fixed betas.
///
/// With `t` the 1-based index of the current step:
///
/// ```text
/// m ← β1·m + (1−β1)·g          v ← β2·v + (1−β2)·g²
/// m̂ = m / (1 − β1^(t+1))       v̂ = v / (1 − β2^t)      ĝ = g / (1 − β1^t)
/// θ ← θ − lr·(β1·m̂ + (1−β1)·ĝ) / (√v̂ + ε)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct NadamState<T> {
    pub config: NadamConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Steps taken so far.
    pub t: u64,
}

impl<T: Real> NadamState<T> {
    /// Zeroed moments for parameters of the given lengths.
    pub fn new(config: NadamConfig, lengths: &[usize]) -> Self {
        NadamState {
            config,
            m: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lengths.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::usage(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.len() != self.m[i].len() {
                return Err(Error::dim(format!(
                    "parameter {i}: shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if let Some(k) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at parameter {i}, element {k}"
                )));
            }
        }

        let c = self.config;
        let t = self.t + 1;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let m_corr = T::from_f64_lossy(1.0 - c.beta1.powi(t as i32 + 1));
        let v_corr = T::from_f64_lossy(1.0 - c.beta2.powi(t as i32));
        let g_corr = T::from_f64_lossy(1.0 - c.beta1.powi(t as i32));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.epsilon);

        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (theta, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                let m_hat = m[k] / m_corr;
                let v_hat = v[k] / v_corr;
                let g_hat = gk / g_corr;
                *theta = *theta - lr * (b1 * m_hat + (one - b1) * g_hat) / (v_hat.sqrt() + eps);
            }
        }
        self.t = t;
        Ok(())
    }
}
