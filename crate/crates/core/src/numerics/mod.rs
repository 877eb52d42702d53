//! Minimal dense tensor kernel: reverse-mode autodiff, Adam, gradient
//! clipping, cosine similarity, and a finite-difference oracle.

mod adam;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use graph::{grad, Graph, NodeId};
pub use tensor::Tensor;

use alloc::vec::Vec;

use crate::fmath;
use crate::Result;

/// Scale all gradients by `max_norm / ‖g‖` when the global L2 norm exceeds
/// `max_norm`; identity otherwise. Direction is preserved.
pub fn clip_l2(grads: &mut [Tensor], max_norm: f64) {
    debug_assert!(max_norm > 0.0);
    let norm = fmath::sqrt(grads.iter().map(|g| g.data().iter().map(|v| v * v).sum::<f64>()).sum());
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
}

/// Cosine similarity in `[-1, 1]`; zero when either vector has norm below
/// `1e-12` (no interference signal).
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = fmath::sqrt(u.iter().map(|a| a * a).sum());
    let nv = fmath::sqrt(v.iter().map(|a| a * a).sum());
    if nu < 1e-12 || nv < 1e-12 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Central finite differences of a scalar function of parameter tensors:
/// `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h`. The independent oracle for [`grad`].
pub fn finite_diff<F>(mut f: F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let mut g = Tensor::zeros(params[i].rows(), params[i].cols());
        for j in 0..params[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = f(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = f(&work)?;
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}
