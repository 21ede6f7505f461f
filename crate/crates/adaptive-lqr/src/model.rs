//! System class with affinely parametrized dynamics `x⁺ = A(θ)x + B(θ)u + w`,
//! the hyperrectangular parameter set, and the linear-regression rewrite
//! `A(θ)x + B(θ)u = δ(x,u) + D(x,u)θ` that drives the LMS estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_error, Result};

/// Affine parametrization of the system matrices:
/// `A(θ) = A0 + Σᵢ θᵢ Aᵢ` and `B(θ) = B0 + Σᵢ θᵢ Bᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineParametrization {
    a0: DMatrix<f64>,
    a_incr: Vec<DMatrix<f64>>,
    b0: DMatrix<f64>,
    b_incr: Vec<DMatrix<f64>>,
}

impl AffineParametrization {
    pub fn new(
        a0: DMatrix<f64>,
        a_incr: Vec<DMatrix<f64>>,
        b0: DMatrix<f64>,
        b_incr: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = a0.nrows();
        let m = b0.ncols();
        if a0.ncols() != n {
            return Err(dim_error("AffineParametrization A0", format!("{n}x{n}"), format!("{}x{}", a0.nrows(), a0.ncols())));
        }
        if b0.nrows() != n {
            return Err(dim_error("AffineParametrization B0", format!("{n} rows"), format!("{} rows", b0.nrows())));
        }
        if a_incr.len() != b_incr.len() {
            return Err(dim_error("AffineParametrization increments", a_incr.len(), b_incr.len()));
        }
        for ai in &a_incr {
            if ai.shape() != (n, n) {
                return Err(dim_error("A increment", format!("{n}x{n}"), format!("{}x{}", ai.nrows(), ai.ncols())));
            }
        }
        for bi in &b_incr {
            if bi.shape() != (n, m) {
                return Err(dim_error("B increment", format!("{n}x{m}"), format!("{}x{}", bi.nrows(), bi.ncols())));
            }
        }
        Ok(Self { a0, a_incr, b0, b_incr })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.a0.nrows()
    }

    /// Input dimension `m`.
    pub fn input_dim(&self) -> usize {
        self.b0.ncols()
    }

    /// Parameter dimension `p`.
    pub fn param_dim(&self) -> usize {
        self.a_incr.len()
    }

    pub fn a0(&self) -> &DMatrix<f64> {
        &self.a0
    }

    pub fn b0(&self) -> &DMatrix<f64> {
        &self.b0
    }

    pub fn a_increments(&self) -> &[DMatrix<f64>] {
        &self.a_incr
    }

    pub fn b_increments(&self) -> &[DMatrix<f64>] {
        &self.b_incr
    }

    /// Evaluates `(A(θ), B(θ))`.
    pub fn eval_system(&self, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if theta.len() != self.param_dim() {
            return Err(dim_error("eval_system theta", self.param_dim(), theta.len()));
        }
        let mut a = self.a0.clone();
        let mut b = self.b0.clone();
        for i in 0..theta.len() {
            a += &self.a_incr[i] * theta[i];
            b += &self.b_incr[i] * theta[i];
        }
        Ok((a, b))
    }

    /// Regression terms of the rewrite `A(θ)x + B(θ)u = δ(x,u) + D(x,u)θ`:
    /// `δ = A0 x + B0 u`, and column `i` of `D` is `Aᵢ x + Bᵢ u`.
    pub fn regression_terms(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (n, m, p) = (self.state_dim(), self.input_dim(), self.param_dim());
        if x.len() != n {
            return Err(dim_error("regression_terms x", n, x.len()));
        }
        if u.len() != m {
            return Err(dim_error("regression_terms u", m, u.len()));
        }
        let delta = &self.a0 * x + &self.b0 * u;
        let mut d = DMatrix::zeros(n, p);
        for i in 0..p {
            let col = &self.a_incr[i] * x + &self.b_incr[i] * u;
            d.set_column(i, &col);
        }
        Ok((delta, d))
    }
}

/// The compact hyperrectangular parameter set Θ with elementwise bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBox {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl ParamBox {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(dim_error("ParamBox bounds", lower.len(), upper.len()));
        }
        for i in 0..lower.len() {
            if !(lower[i] <= upper[i]) {
                return Err(crate::error::Error::InvalidConfig(format!(
                    "ParamBox component {i}: lower bound {} exceeds upper bound {}",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    /// Euclidean projection onto the box: elementwise clipping. Idempotent
    /// and nonexpansive.
    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| theta[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.dim()
            && (0..self.dim()).all(|i| theta[i] >= self.lower[i] && theta[i] <= self.upper[i])
    }

    /// Diameter `d = max_{θ₁,θ₂ ∈ Θ} ‖θ₁ − θ₂‖ = ‖upper − lower‖`.
    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    /// Center of the box.
    pub fn center(&self) -> DVector<f64> {
        (&self.upper + &self.lower) / 2.0
    }
}
