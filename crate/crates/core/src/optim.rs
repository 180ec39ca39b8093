//! Adaptive moment estimation.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::{Parameter, Tensor};

/// Adam state: step counter plus first and second moment buffers shaped like
/// the parameters they track.
///
/// With gradient `g` at step `k` (counting from 1):
///
/// ```text
/// m = b1·m + (1 − b1)·g
/// v = b2·v + (1 − b2)·g²
/// θ = θ − lr · (m / (1 − b1^k)) / (sqrt(v / (1 − b2^k)) + eps)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Parameter], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    /// Checks that the moment buffers line up with `params`.
    pub fn matches(&self, params: &[Parameter]) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.shape() == p.value.shape() && v.shape() == p.value.shape())
    }

    /// Applies one update using each parameter's gradient buffer. Parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut [Parameter]) -> Result<()> {
        if !self.matches(params) {
            return Err(Error::InvalidConfig(
                "optimizer state does not match parameters".into(),
            ));
        }
        self.step += 1;
        let k = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, k as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, k as f64);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if !p.requires_grad {
                continue;
            }
            let grad = p.grad.as_ref().map(|g| g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, theta) in p.value.data_mut().iter_mut().enumerate() {
                let g = grad.map_or(0.0, |g| g[i]);
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g * g;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                *theta -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
            }
            p.value.ensure_finite("adam")?;
        }
        Ok(())
    }
}
