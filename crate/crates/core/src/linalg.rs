//! Small dense linear algebra for the ridge-regression state behind LinUCB
//! and C2UCB.
//!
//! Matrices are tiny (d ≤ 10 in every experiment), so the Gram matrix is
//! stored densely in row-major order and the Cholesky factor is recomputed
//! from scratch after each update rather than maintained by rank-one
//! corrections. That keeps the estimate free of accumulated drift over long
//! horizons.

use thiserror::Error;

/// Pivots below `PIVOT_FLOOR * lambda` are treated as loss of definiteness.
const PIVOT_FLOOR: f64 = 1e-12;

/// Relative slack allowed when checking `‖x‖₂ ≤ L`.
const NORM_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("ridge parameters must be positive and finite (lambda={lambda}, L={feature_bound}, S={param_bound})")]
    InvalidParameter {
        lambda: f64,
        feature_bound: f64,
        param_bound: f64,
    },
    #[error("lambda={lambda} violates lambda >= max(1, L^2) = {required}")]
    LambdaTooSmall { lambda: f64, required: f64 },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature norm {norm} exceeds the bound L={bound}")]
    FeatureTooLong { norm: f64, bound: f64 },
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
}

/// Incremental ridge regression: `V = λI + Σ x xᵀ`, `b = Σ r x`, `θ̂ = V⁻¹ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    dim: usize,
    lambda: f64,
    feature_bound: f64,
    param_bound: f64,
    gram: Vec<f64>,
    response: Vec<f64>,
    estimate: Vec<f64>,
    /// Lower-triangular Cholesky factor of `gram`, row-major.
    factor: Vec<f64>,
}

impl RidgeState {
    /// Starts from `V = λI`, `b = 0`, `θ̂ = 0`.
    ///
    /// Requires `λ ≥ max(1, L²)`.
    pub fn new(
        dim: usize,
        lambda: f64,
        feature_bound: f64,
        param_bound: f64,
    ) -> Result<Self, LinalgError> {
        if dim == 0 {
            return Err(LinalgError::ZeroDimension);
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(lambda) && positive(feature_bound) && positive(param_bound)) {
            return Err(LinalgError::InvalidParameter {
                lambda,
                feature_bound,
                param_bound,
            });
        }
        let required = f64::max(1.0, feature_bound * feature_bound);
        if lambda < required {
            return Err(LinalgError::LambdaTooSmall { lambda, required });
        }

        let mut gram = vec![0.0; dim * dim];
        let mut factor = vec![0.0; dim * dim];
        let root = lambda.sqrt();
        for i in 0..dim {
            gram[i * dim + i] = lambda;
            factor[i * dim + i] = root;
        }
        Ok(Self {
            dim,
            lambda,
            feature_bound,
            param_bound,
            gram,
            response: vec![0.0; dim],
            estimate: vec![0.0; dim],
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }

    pub fn param_bound(&self) -> f64 {
        self.param_bound
    }

    /// Row-major `d × d` Gram matrix `V`.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn estimate(&self) -> &[f64] {
        &self.estimate
    }

    /// Adds one observation `(x, r)` and re-solves for the estimate.
    pub fn update(&mut self, feature: &[f64], reward: f64) -> Result<(), LinalgError> {
        self.check_len(feature)?;
        let norm = dot(feature, feature).sqrt();
        if norm > self.feature_bound * (1.0 + NORM_SLACK) {
            return Err(LinalgError::FeatureTooLong {
                norm,
                bound: self.feature_bound,
            });
        }

        let d = self.dim;
        for i in 0..d {
            for j in i..d {
                // One product written to both triangles keeps V bitwise symmetric.
                let v = self.gram[i * d + j] + feature[i] * feature[j];
                self.gram[i * d + j] = v;
                self.gram[j * d + i] = v;
            }
            self.response[i] += reward * feature[i];
        }

        self.factor = cholesky(&self.gram, d, PIVOT_FLOOR * self.lambda)?;
        self.estimate = cholesky_solve(&self.factor, d, &self.response);
        Ok(())
    }

    /// `‖x‖_{V⁻¹} = √(xᵀ V⁻¹ x)`, computed as `‖L⁻¹ x‖₂` with `V = L Lᵀ`.
    pub fn mahalanobis_inverse_norm(&self, feature: &[f64]) -> Result<f64, LinalgError> {
        self.check_len(feature)?;
        let y = forward_substitute(&self.factor, self.dim, feature);
        Ok(dot(&y, &y).sqrt())
    }

    /// `xᵀ θ̂`.
    pub fn predict(&self, feature: &[f64]) -> Result<f64, LinalgError> {
        self.check_len(feature)?;
        Ok(dot(feature, &self.estimate))
    }

    fn check_len(&self, v: &[f64]) -> Result<(), LinalgError> {
        if v.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factorization `A = L Lᵀ` of a row-major symmetric matrix.
///
/// Fails if any pivot falls below `pivot_floor`.
pub fn cholesky(a: &[f64], n: usize, pivot_floor: f64) -> Result<Vec<f64>, LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag >= pivot_floor) {
            return Err(LinalgError::NotPositiveDefinite { row: j, pivot: diag });
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / ljj;
        }
    }
    Ok(l)
}

fn forward_substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = forward_substitute(l, n, b);
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}
