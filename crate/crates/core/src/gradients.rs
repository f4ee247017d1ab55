//! Rank-1 projections and the two local gradient estimators.
//!
//! Both estimators average over the neighbors `y` of a center `x` and scale
//! by `n`, since `E[P_{x,y}] = I/n` when `y` is uniform in a ball around `x`:
//!
//! ```text
//! finite-difference:  (n/N_x) Σ_y (f(y) - f(x)) / ‖y - x‖ · (y - x) / ‖y - x‖
//! ideal:              (n/N_x) Σ_y P_{x,y} ∇f(x)
//! ```

use nalgebra::{DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::functions::TargetFunction;

/// Orthogonal projection onto `span(y - x)`, stored as its unit direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    direction: DVector<f64>,
}

impl Projection {
    /// Projection onto the direction from `x` to `y`.
    pub fn between(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
        }
        let d = DVector::from_iterator(x.len(), y.iter().zip(x).map(|(a, b)| a - b));
        Self::onto(d)
    }

    /// Projection onto `span(v)` for any nonzero `v`.
    pub fn onto(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroDisplacement);
        }
        Ok(Self { direction: v / norm })
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    /// `u (u* v)`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.direction * self.direction.dot(v)
    }
}

/// Applies `p` to `v`.
pub fn project(p: &Projection, v: &DVector<f64>) -> Result<DVector<f64>> {
    if p.dim() != v.len() {
        return Err(Error::DimensionMismatch { expected: p.dim(), actual: v.len() });
    }
    Ok(p.apply(v))
}

fn check_neighbors(x: &[f64], neighbors: &DMatrixView<'_, f64>) -> Result<()> {
    if neighbors.ncols() == 0 {
        return Err(Error::InvalidArgument("neighbor list is empty".into()));
    }
    if neighbors.nrows() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: neighbors.nrows() });
    }
    Ok(())
}

/// Finite-difference gradient estimate at `x` from its neighbors (one per
/// column). Evaluates `f` once at `x` and once per neighbor.
pub fn fd_gradient(f: &TargetFunction, x: &[f64], neighbors: DMatrixView<'_, f64>) -> Result<DVector<f64>> {
    check_neighbors(x, &neighbors)?;
    let fx = f.eval(x);
    fd_gradient_from_value(f, x, fx, neighbors)
}

/// As [`fd_gradient`], reusing a known value `f(x)`.
pub fn fd_gradient_from_value(f: &TargetFunction, x: &[f64], fx: f64, neighbors: DMatrixView<'_, f64>) -> Result<DVector<f64>> {
    check_neighbors(x, &neighbors)?;
    let n = x.len();
    let mut acc = DVector::zeros(n);
    let mut y = vec![0.0; n];
    let mut d = DVector::zeros(n);
    for col in neighbors.column_iter() {
        for (i, v) in col.iter().enumerate() {
            y[i] = *v;
            d[i] = v - x[i];
        }
        let dist_sq = d.norm_squared();
        if dist_sq == 0.0 {
            return Err(Error::ZeroDisplacement);
        }
        // (f(y) - f(x)) / ‖d‖ · d / ‖d‖
        acc.axpy((f.eval(&y) - fx) / dist_sq, &d, 1.0);
    }
    Ok(acc * (n as f64 / neighbors.ncols() as f64))
}

/// Projected-gradient average `(n/N_x) Σ P_{x,y} ∇f(x)` given the exact
/// gradient at `x`.
pub fn ideal_gradient(grad_fx: &DVector<f64>, x: &[f64], neighbors: DMatrixView<'_, f64>) -> Result<DVector<f64>> {
    check_neighbors(x, &neighbors)?;
    if grad_fx.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: grad_fx.len() });
    }
    let n = x.len();
    let mut acc = DVector::zeros(n);
    let mut d = DVector::zeros(n);
    for col in neighbors.column_iter() {
        for (i, v) in col.iter().enumerate() {
            d[i] = v - x[i];
        }
        let dist_sq = d.norm_squared();
        if dist_sq == 0.0 {
            return Err(Error::ZeroDisplacement);
        }
        acc.axpy(d.dot(grad_fx) / dist_sq, &d, 1.0);
    }
    Ok(acc * (n as f64 / neighbors.ncols() as f64))
}
