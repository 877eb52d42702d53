//! Linear forecaster fit by ridge least squares on flattened lag windows,
//! with an optional Adam-driven online variant.
//!
//! Each horizon step is regressed on every lagged feature plus a bias:
//! `ŷ = [flatten(x) | 1] · weights`. The fit solves the normal equations
//! `(AᵀA + ridge·I) w = AᵀY` with a symmetric positive-definite solve; the
//! online variant takes one Adam step on the MAE loss per arriving sample.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fmath;
use crate::numerics::{grad, AdamState, Graph, Tensor};
use crate::timebase::WindowBatch;
use crate::{Error, Result};

/// Weights `(window·width + 1) × horizon`; the last input row is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub window: usize,
    pub width: usize,
    pub horizon: usize,
    pub ridge: f64,
    weights: Tensor,
    optimizer: Option<AdamState>,
}

impl LinearModel {
    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.l2_norm()
    }

    /// Attach Adam state so [`LinearModel::online_step`] can be used.
    pub fn with_online(mut self, lr: f64) -> Self {
        self.optimizer = Some(AdamState::new(core::slice::from_ref(&self.weights), lr));
        self
    }

    /// `ŷ = [flatten(x) | 1] · weights` for one flattened window.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.window * self.width;
        if x.len() != p {
            return Err(Error::ShapeMismatch(alloc::format!(
                "window of {} values, model expects {p}",
                x.len()
            )));
        }
        let mut out = alloc::vec![0.0; self.horizon];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (h, o) in out.iter_mut().enumerate() {
                *o += xj * self.weights.at(j, h);
            }
        }
        for (h, o) in out.iter_mut().enumerate() {
            *o += self.weights.at(p, h); // bias row
        }
        Ok(out)
    }

    /// One Adam step on the MAE between `predict(x)` and `y`. The linear
    /// model is not gradient-clipped.
    pub fn online_step(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        let optimizer = self
            .optimizer
            .as_mut()
            .ok_or_else(|| Error::InvalidConfig("online_step without optimizer state".into()))?;
        if y.len() != self.horizon {
            return Err(Error::ShapeMismatch(alloc::format!(
                "target of {} values, horizon is {}",
                y.len(),
                self.horizon
            )));
        }
        let p = self.window * self.width;
        let mut row = Vec::with_capacity(p + 1);
        row.extend_from_slice(x);
        row.push(1.0);

        let mut g = Graph::new();
        let a = g.leaf(Tensor::row(row));
        let w = g.leaf(self.weights.clone());
        let target = g.leaf(Tensor::row(y.to_vec()));
        let yhat = g.matmul(a, w)?;
        let diff = g.sub(yhat, target)?;
        let absdiff = g.abs(diff);
        let loss = g.mean(absdiff);

        let grads = grad(&g, loss, &[w])?;
        let mut params = [self.weights.clone()];
        optimizer.step(&mut params, &grads)?;
        let [weights] = params;
        self.weights = weights;
        Ok(())
    }
}

/// Ridge least squares over a window batch via the normal equations.
/// A singular system (only possible with `ridge = 0`) is reported as an
/// error rather than regularized silently.
pub fn var_fit(batch: &WindowBatch, ridge: f64) -> Result<LinearModel> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::InvalidConfig("ridge must be finite and ≥ 0".into()));
    }
    let p = batch.window * batch.width + 1;
    let h = batch.horizon;

    // Gram matrix AᵀA and right-hand side AᵀY, with A = [flattened X | 1].
    let mut gram = alloc::vec![0.0; p * p];
    let mut rhs = alloc::vec![0.0; p * h];
    let mut row = alloc::vec![0.0; p];
    for i in 0..batch.n {
        row[..p - 1].copy_from_slice(batch.input(i));
        row[p - 1] = 1.0;
        let y = batch.target(i);
        for j in 0..p {
            let aj = row[j];
            if aj == 0.0 {
                continue;
            }
            for k in j..p {
                gram[j * p + k] += aj * row[k];
            }
            for (c, &yc) in y.iter().enumerate() {
                rhs[j * h + c] += aj * yc;
            }
        }
    }
    for j in 0..p {
        gram[j * p + j] += ridge;
        for k in 0..j {
            gram[j * p + k] = gram[k * p + j];
        }
    }

    let weights = cholesky_solve(&mut gram, &mut rhs, p, h)?;
    Ok(LinearModel {
        window: batch.window,
        width: batch.width,
        horizon: batch.horizon,
        ridge,
        weights,
        optimizer: None,
    })
}

/// Solve the SPD system `G·W = B` in place; `g` is overwritten with its
/// Cholesky factor and `b` with the solution.
fn cholesky_solve(g: &mut [f64], b: &mut [f64], n: usize, h: usize) -> Result<Tensor> {
    let scale = (0..n).map(|i| g[i * n + i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * scale.max(1.0);
    for j in 0..n {
        let mut d = g[j * n + j];
        for k in 0..j {
            d -= g[j * n + k] * g[j * n + k];
        }
        if d <= tol {
            return Err(Error::SingularSystem);
        }
        let d = fmath::sqrt(d);
        g[j * n + j] = d;
        for i in j + 1..n {
            let mut v = g[i * n + j];
            for k in 0..j {
                v -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = v / d;
        }
    }
    // Forward then backward substitution for each right-hand-side column.
    for c in 0..h {
        for i in 0..n {
            let mut v = b[i * h + c];
            for k in 0..i {
                v -= g[i * n + k] * b[k * h + c];
            }
            b[i * h + c] = v / g[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i * h + c];
            for k in i + 1..n {
                v -= g[k * n + i] * b[k * h + c];
            }
            b[i * h + c] = v / g[i * n + i];
        }
    }
    Tensor::new(n, h, b.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timebase::WindowBatch;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn random_batch(
        n: usize,
        window: usize,
        width: usize,
        horizon: usize,
        seed: u64,
    ) -> WindowBatch {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * window * width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n * horizon).map(|_| rng.random_range(-1.0..1.0)).collect();
        WindowBatch::from_parts(window, width, horizon, x, y).unwrap()
    }

    /// Independent oracle: dense Gauss-Jordan solve of the same normal
    /// equations, sharing no code with the Cholesky path.
    fn normal_equations_oracle(batch: &WindowBatch, ridge: f64) -> Vec<f64> {
        let p = batch.window * batch.width + 1;
        let h = batch.horizon;
        let mut a = alloc::vec![0.0; p * p];
        let mut b = alloc::vec![0.0; p * h];
        for i in 0..batch.n {
            let mut row: Vec<f64> = batch.input(i).to_vec();
            row.push(1.0);
            for j in 0..p {
                for k in 0..p {
                    a[j * p + k] += row[j] * row[k];
                }
                for (c, &yc) in batch.target(i).iter().enumerate() {
                    b[j * h + c] += row[j] * yc;
                }
            }
        }
        for j in 0..p {
            a[j * p + j] += ridge;
        }
        // Gauss-Jordan with partial pivoting on the augmented system.
        for col in 0..p {
            let pivot = (col..p)
                .max_by(|&i, &j| {
                    fmath::abs(a[i * p + col]).partial_cmp(&fmath::abs(a[j * p + col])).unwrap()
                })
                .unwrap();
            for k in 0..p {
                a.swap(col * p + k, pivot * p + k);
            }
            for k in 0..h {
                b.swap(col * h + k, pivot * h + k);
            }
            let d = a[col * p + col];
            for k in 0..p {
                a[col * p + k] /= d;
            }
            for k in 0..h {
                b[col * h + k] /= d;
            }
            for r in 0..p {
                if r == col {
                    continue;
                }
                let f = a[r * p + col];
                if f == 0.0 {
                    continue;
                }
                for k in 0..p {
                    a[r * p + k] -= f * a[col * p + k];
                }
                for k in 0..h {
                    b[r * h + k] -= f * b[col * h + k];
                }
            }
        }
        b
    }

    #[test]
    fn constant_target_lands_on_the_bias() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let n = 40;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = alloc::vec![7.25; n];
        let batch = WindowBatch::from_parts(1, 3, 1, x, y).unwrap();
        let model = var_fit(&batch, 0.0).unwrap();
        for i in 0..batch.n {
            let pred = model.predict(batch.input(i)).unwrap();
            assert!(fmath::abs(pred[0] - 7.25) < 1e-8);
        }
    }

    #[test]
    fn matches_independent_normal_equations_oracle() {
        let batch = random_batch(60, 1, 5, 2, 42);
        let model = var_fit(&batch, 0.0).unwrap();
        let oracle = normal_equations_oracle(&batch, 0.0);
        for (got, want) in model.weights().data().iter().zip(&oracle) {
            assert!(fmath::abs(got - want) < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn rank_deficient_without_ridge_is_singular() {
        // Fewer samples than unknowns.
        let batch = random_batch(3, 2, 4, 1, 5);
        assert_eq!(var_fit(&batch, 0.0).unwrap_err(), Error::SingularSystem);
        // A positive ridge repairs it.
        assert!(var_fit(&batch, 1e-6).is_ok());
    }

    #[test]
    fn predict_basics() {
        let batch = random_batch(10, 1, 1, 1, 9);
        let mut model = var_fit(&batch, 1e-6).unwrap();
        // Zero weights predict zero.
        model.weights = Tensor::zeros(2, 1);
        assert_eq!(model.predict(&[3.0]).unwrap(), alloc::vec![0.0]);
        // Identity weight, zero bias passes the input through.
        model.weights = Tensor::new(2, 1, alloc::vec![1.0, 0.0]).unwrap();
        assert_eq!(model.predict(&[3.0]).unwrap(), alloc::vec![3.0]);
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn predict_matches_dot_product_oracle() {
        let batch = random_batch(30, 2, 3, 2, 17);
        let model = var_fit(&batch, 1e-4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = model.predict(&x).unwrap();
        for h in 0..2 {
            let mut want = model.weights().at(6, h);
            for (j, &xj) in x.iter().enumerate() {
                want += xj * model.weights().at(j, h);
            }
            assert!(fmath::abs(got[h] - want) < 1e-12);
        }
    }

    #[test]
    fn ridge_monotonically_shrinks_weights() {
        let batch = random_batch(50, 2, 4, 1, 23);
        let mut prev = f64::INFINITY;
        for ridge in [0.0, 1e-3, 1e-1, 10.0] {
            let norm = var_fit(&batch, ridge).unwrap().weight_norm();
            assert!(norm <= prev + 1e-12, "ridge {ridge}: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn online_step_lr_zero_is_identity() {
        let batch = random_batch(20, 1, 2, 1, 3);
        let mut model = var_fit(&batch, 1e-6).unwrap().with_online(0.0);
        let before = model.weights().clone();
        model.online_step(&[0.5, -0.5], &[1.0]).unwrap();
        assert_eq!(model.weights(), &before);
    }

    #[test]
    fn online_first_step_moves_bias_against_error_sign() {
        // Scalar model that over-predicts: bias should move down by ≈ lr.
        let mut model = LinearModel {
            window: 1,
            width: 1,
            horizon: 1,
            ridge: 0.0,
            weights: Tensor::new(2, 1, alloc::vec![0.0, 5.0]).unwrap(),
            optimizer: None,
        }
        .with_online(0.01);
        model.online_step(&[0.0], &[1.0]).unwrap();
        let bias = model.weights().at(1, 0);
        assert!(fmath::abs(bias - (5.0 - 0.01)) < 1e-6, "bias {bias}");
    }

    #[test]
    fn online_steps_converge_on_a_fixed_sample() {
        let batch = random_batch(12, 1, 3, 1, 31);
        let mut model = var_fit(&batch, 1e-2).unwrap().with_online(1e-2);
        let x = [0.3, -0.7, 1.1];
        let y = [2.0];
        let start = fmath::abs(model.predict(&x).unwrap()[0] - y[0]);
        for _ in 0..200 {
            model.online_step(&x, &y).unwrap();
        }
        let end = fmath::abs(model.predict(&x).unwrap()[0] - y[0]);
        assert!(end < start, "MAE did not drop: {start} -> {end}");
    }
}
