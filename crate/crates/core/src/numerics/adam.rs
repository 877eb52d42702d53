//! Adam with bias correction over a list of parameter tensors.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Optimizer state: first/second moments and a step counter per parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: Vec<u64>,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the canonical constants
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            t: alloc::vec![0; params.len()],
        }
    }

    /// Append fresh zero moments for extra parameters added after creation.
    pub fn extend(&mut self, params: &[Tensor]) {
        for p in params {
            self.m.push(Tensor::zeros(p.rows(), p.cols()));
            self.v.push(Tensor::zeros(p.rows(), p.cols()));
            self.t.push(0);
        }
    }

    pub fn tracked(&self) -> usize {
        self.m.len()
    }

    pub fn step_count(&self, param: usize) -> u64 {
        self.t[param]
    }

    /// One bias-corrected update of every parameter in place.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::LengthMismatch(format!(
                "adam tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for i in 0..params.len() {
            if !params[i].same_shape(&grads[i]) || !params[i].same_shape(&self.m[i]) {
                return Err(Error::ShapeMismatch(format!(
                    "adam parameter {i}: param {:?}, grad {:?}",
                    params[i].shape(),
                    grads[i].shape()
                )));
            }
            self.t[i] += 1;
            let t = self.t[i] as f64;
            let bc1 = 1.0 - libm::pow(self.beta1, t);
            let bc2 = 1.0 - libm::pow(self.beta2, t);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for ((p, &g), (mj, vj)) in params[i]
                .data_mut()
                .iter_mut()
                .zip(grads[i].data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * g;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * g * g;
                let m_hat = *mj / bc1;
                let v_hat = *vj / bc2;
                *p -= self.lr * m_hat / (fmath::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}
