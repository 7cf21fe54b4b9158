use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{ensure, Error, Result};

/// Affine multi-output map `b̂ = W z + w₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `q × n`.
    pub weights: Array2<f64>,
    pub intercept: Array1<f64>,
    pub ridge_lambda: f64,
}

/// Fitted model plus solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: LinearModel,
    /// The centred design had numerically zero singular values and `λ = 0`;
    /// the minimum-norm solution was returned.
    pub rank_deficient: bool,
    pub rank: usize,
}

impl LinearModel {
    /// Minimizes `Σ‖W zᵢ + w₀ − bᵢ‖² + λ‖W‖²_F` with an unpenalized intercept,
    /// solving all outputs at once through an SVD of the centred design.
    pub fn fit(latents: ArrayView2<f64>, targets: ArrayView2<f64>, ridge_lambda: f64) -> Result<LinearFit> {
        let (samples, n) = latents.dim();
        if targets.nrows() != samples {
            return Err(Error::DimensionMismatch {
                expected: samples,
                got: targets.nrows(),
            });
        }
        ensure(samples >= 1 && n >= 1, || "regression needs samples and features".into())?;
        ensure(targets.ncols() >= 1, || "regression needs at least one target".into())?;
        ensure(ridge_lambda.is_finite() && ridge_lambda >= 0.0, || {
            format!("ridge penalty must be non-negative, got {ridge_lambda}")
        })?;
        ensure(
            latents.iter().chain(targets.iter()).all(|v| v.is_finite()),
            || "regression inputs must be finite".into(),
        )?;

        let z_mean = latents.mean_axis(Axis(0)).expect("non-empty");
        let b_mean = targets.mean_axis(Axis(0)).expect("non-empty");
        let zc = &latents - &z_mean;
        let bc = &targets - &b_mean;

        let zc = DMatrix::from_fn(samples, n, |i, j| zc[[i, j]]);
        let svd = zc.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let tol = s_max * samples.max(n) as f64 * f64::EPSILON;

        let mut rank = 0;
        let gains: Vec<f64> = svd
            .singular_values
            .iter()
            .map(|&s| {
                if s > tol {
                    rank += 1;
                }
                if ridge_lambda > 0.0 {
                    s / (s * s + ridge_lambda)
                } else if s > tol {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect();

        // Wᵀ = V diag(g) Uᵀ Bc
        let bc = DMatrix::from_fn(samples, bc.ncols(), |i, j| bc[[i, j]]);
        let mut utb = u.transpose() * bc;
        for (mut row, g) in utb.row_iter_mut().zip(&gains) {
            row *= *g;
        }
        let w_t = v_t.transpose() * utb;
        let q = targets.ncols();
        let weights = Array2::from_shape_fn((q, n), |(i, j)| w_t[(j, i)]);
        let intercept = &b_mean - &weights.dot(&z_mean);
        Ok(LinearFit {
            model: LinearModel {
                weights,
                intercept,
                ridge_lambda,
            },
            rank_deficient: ridge_lambda == 0.0 && rank < n.min(samples),
            rank,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn predict(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: z.len(),
            });
        }
        Ok(self.weights.dot(&z) + &self.intercept)
    }

    pub fn predict_rows(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: z.ncols(),
            });
        }
        Ok(z.dot(&self.weights.t()) + &self.intercept)
    }
}
