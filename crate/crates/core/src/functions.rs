//! Target functions: black-box evaluation plus whatever analytic oracles are
//! known (gradient, Hessian and gradient bounds, second-moment matrix).

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;

/// A function `f: R^n -> R` queried pointwise.
///
/// Every call to [`TargetFunction::eval`] increments an atomic counter, so
/// sample budgets can be audited after an estimate. Gradient queries are
/// oracle access and are not counted.
pub struct TargetFunction {
    dim: usize,
    eval: EvalFn,
    grad: Option<GradFn>,
    hessian_bound: Option<f64>,
    grad_bound: Option<f64>,
    second_moment: Option<DMatrix<f64>>,
    ridge_basis: Option<DMatrix<f64>>,
    evals: AtomicU64,
}

impl fmt::Debug for TargetFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TargetFunction")
            .field("dim", &self.dim)
            .field("has_gradient", &self.grad.is_some())
            .field("hessian_bound", &self.hessian_bound)
            .field("grad_bound", &self.grad_bound)
            .field("evals", &self.eval_count())
            .finish_non_exhaustive()
    }
}

impl TargetFunction {
    pub fn new(dim: usize, eval: EvalFn) -> Self {
        Self {
            dim,
            eval,
            grad: None,
            hessian_bound: None,
            grad_bound: None,
            second_moment: None,
            ridge_basis: None,
            evals: AtomicU64::new(0),
        }
    }

    pub fn with_gradient(mut self, grad: GradFn) -> Self {
        self.grad = Some(grad);
        self
    }

    pub fn with_hessian_bound(mut self, bound: f64) -> Self {
        self.hessian_bound = Some(bound);
        self
    }

    pub fn with_grad_bound(mut self, bound: f64) -> Self {
        self.grad_bound = Some(bound);
        self
    }

    /// Attaches `E[∇f ∇f*]` under the uniform measure on `[-1, 1]^n`.
    pub fn with_second_moment(mut self, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != self.dim || sigma.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: sigma.nrows() });
        }
        let asym = (&sigma - sigma.transpose()).amax();
        if asym > 1e-12 * sigma.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        self.second_moment = Some(sigma);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.evals.fetch_add(1, Ordering::Relaxed);
        (self.eval)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>> {
        let grad = self.grad.as_ref().ok_or(Error::MissingOracle("gradient"))?;
        Ok(grad(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// `H_f`, a bound on the spectral norm of the Hessian over the domain.
    pub fn hessian_bound(&self) -> Option<f64> {
        self.hessian_bound
    }

    /// `L_f`, a bound on the gradient norm over the domain.
    pub fn grad_bound(&self) -> Option<f64> {
        self.grad_bound
    }

    pub fn second_moment(&self) -> Option<&DMatrix<f64>> {
        self.second_moment.as_ref()
    }

    /// Orthonormal basis of the ridge subspace, for ridge functions.
    pub fn ridge_basis(&self) -> Option<&DMatrix<f64>> {
        self.ridge_basis.as_ref()
    }

    /// Number of `eval` calls since construction or the last reset.
    pub fn eval_count(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    pub fn reset_eval_count(&self) {
        self.evals.store(0, Ordering::Relaxed);
    }
}

fn spectral_norm_symmetric(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().amax()
}

/// `f(x) = ½ x*Ax + b*x` with `Σ_μ = A²/3 + bb*` for the uniform measure on
/// `[-1, 1]^n`.
pub fn make_quadratic(a: DMatrix<f64>, b: DVector<f64>) -> Result<TargetFunction> {
    let n = b.len();
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if a.nrows() != n || a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: a.nrows() });
    }
    let asym = (&a - a.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let a = (&a + a.transpose()) * 0.5;
    let a_norm = spectral_norm_symmetric(&a);
    let sigma = &a * &a / 3.0 + &b * b.transpose();
    let grad_bound = a_norm * (n as f64).sqrt() + b.norm();

    let (a_eval, b_eval) = (a.clone(), b.clone());
    let eval: EvalFn = Arc::new(move |x| {
        let x = DVectorView::from_slice(x, x.len());
        0.5 * x.dot(&(&a_eval * x)) + b_eval.dot(&x)
    });
    let grad: GradFn = Arc::new(move |x| {
        let x = DVectorView::from_slice(x, x.len());
        &a * x + &b
    });
    TargetFunction::new(n, eval)
        .with_gradient(grad)
        .with_hessian_bound(a_norm)
        .with_grad_bound(grad_bound)
        .with_second_moment(sigma)
}

/// Profiles `h: R^r -> R` for ridge functions `f(x) = h(U*x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeProfile {
    /// `h(t) = t₁²`
    Square,
    /// `h(t) = Σ sin(tᵢ)`
    Sine,
    /// `h(t) = Σ tᵢ²`
    SumOfSquares,
}

impl RidgeProfile {
    fn value(self, t: &DVector<f64>) -> f64 {
        match self {
            RidgeProfile::Square => t[0] * t[0],
            RidgeProfile::Sine => t.iter().map(|v| v.sin()).sum(),
            RidgeProfile::SumOfSquares => t.norm_squared(),
        }
    }

    fn gradient(self, t: &DVector<f64>) -> DVector<f64> {
        match self {
            RidgeProfile::Square => {
                let mut g = DVector::zeros(t.len());
                g[0] = 2.0 * t[0];
                g
            }
            RidgeProfile::Sine => t.map(f64::cos),
            RidgeProfile::SumOfSquares => t * 2.0,
        }
    }

    fn hessian_bound(self) -> f64 {
        match self {
            RidgeProfile::Square | RidgeProfile::SumOfSquares => 2.0,
            RidgeProfile::Sine => 1.0,
        }
    }
}

/// `f(x) = h(U*x)` for an `n × r` orthonormal `U`.
pub fn make_ridge(u: DMatrix<f64>, profile: RidgeProfile) -> Result<TargetFunction> {
    let (n, r) = u.shape();
    if n == 0 || r == 0 || r > n {
        return Err(Error::InvalidArgument(format!("ridge basis must be n × r with 1 <= r <= n, got {n} × {r}")));
    }
    let deviation = (u.transpose() * &u - DMatrix::identity(r, r)).amax();
    if deviation > 1e-10 {
        return Err(Error::NotOrthonormal(deviation));
    }
    // ‖U*x‖ <= ‖x‖ <= √n on the cube.
    let grad_bound = match profile {
        RidgeProfile::Square | RidgeProfile::SumOfSquares => 2.0 * (n as f64).sqrt(),
        RidgeProfile::Sine => (r as f64).sqrt(),
    };
    let u_eval = u.clone();
    let u_grad = u.clone();
    let eval: EvalFn = Arc::new(move |x| {
        let t = u_eval.tr_mul(&DVectorView::from_slice(x, x.len()));
        profile.value(&t)
    });
    let grad: GradFn = Arc::new(move |x| {
        let t = u_grad.tr_mul(&DVectorView::from_slice(x, x.len()));
        &u_grad * profile.gradient(&t)
    });
    let mut f = TargetFunction::new(n, eval)
        .with_gradient(grad)
        .with_hessian_bound(profile.hessian_bound())
        .with_grad_bound(grad_bound);
    f.ridge_basis = Some(u);
    Ok(f)
}

/// Serialized quadratic instance `{A: [[...]], b: [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl QuadraticSpec {
    /// Seeded random instance: `A = (G + G*) / (2√n)` with standard normal
    /// `G`, and `b` with i.i.d. `N(0, 1/n)` entries.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Instance, n as u64);
        let scale = 1.0 / (n as f64).sqrt();
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let a = (&g + g.transpose()) * (0.5 * scale);
        let b: Vec<f64> = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { a: a.row_iter().map(|r| r.iter().copied().collect()).collect(), b }
    }

    pub fn matrices(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let n = self.b.len();
        if self.a.len() != n || self.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("A must be an n × n row-major matrix matching b".into()));
        }
        Ok((DMatrix::from_fn(n, n, |i, j| self.a[i][j]), DVector::from_vec(self.b.clone())))
    }

    pub fn build(&self) -> Result<TargetFunction> {
        let (a, b) = self.matrices()?;
        make_quadratic(a, b)
    }
}

/// Serialized ridge instance `{U: [[...]], profile: "..."}` with `U` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeSpec {
    #[serde(rename = "U")]
    pub u: Vec<Vec<f64>>,
    pub profile: RidgeProfile,
}

impl RidgeSpec {
    /// Seeded random instance with `U` the Q factor of an `n × r` standard
    /// normal matrix.
    pub fn random(n: usize, r: usize, profile: RidgeProfile, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Purpose::Instance, (n * 1_000_003 + r) as u64);
        let g = DMatrix::<f64>::from_fn(n, r, |_, _| rng.sample(StandardNormal));
        let q = g.qr().q();
        Self { u: q.row_iter().map(|row| row.iter().copied().collect()).collect(), profile }
    }

    pub fn build(&self) -> Result<TargetFunction> {
        let n = self.u.len();
        let r = self.u.first().map_or(0, Vec::len);
        if self.u.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidArgument("U must be a rectangular row-major matrix".into()));
        }
        make_ridge(DMatrix::from_fn(n, r, |i, j| self.u[i][j]), self.profile)
    }
}

/// Function file accepted by the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FunctionSpec {
    Quadratic(QuadraticSpec),
    Ridge(RidgeSpec),
}

impl FunctionSpec {
    pub fn build(&self) -> Result<TargetFunction> {
        match self {
            FunctionSpec::Quadratic(q) => q.build(),
            FunctionSpec::Ridge(r) => r.build(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_quadratic_has_third_identity_moment() {
        let f = make_quadratic(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        assert_relative_eq!(*f.second_moment().unwrap(), DMatrix::identity(2, 2) / 3.0, epsilon = 1e-15);
        assert_relative_eq!(f.hessian_bound().unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_function_moment_is_outer_product() {
        let f = make_quadratic(DMatrix::zeros(2, 2), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(*f.second_moment().unwrap(), expected);
        assert_eq!(f.eval(&[3.0, -1.0]), 1.0);
    }

    #[test]
    fn quadratic_rejects_asymmetric_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(make_quadratic(a, DVector::zeros(2)), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let spec = QuadraticSpec::random(6, 4);
        let f = spec.build().unwrap();
        let u = DMatrix::from_fn(6, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let ridge = make_ridge(u, RidgeProfile::Sine).unwrap();
        let h = 1e-5;
        let mut rng = rng::stream(1, Purpose::Probe, 0);
        for target in [&f, &ridge] {
            for _ in 0..20 {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let g = target.gradient(&x).unwrap();
                for i in 0..6 {
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (target.eval(&xp) - target.eval(&xm)) / (2.0 * h);
                    assert!((fd - g[i]).abs() <= 1e-4 * g.norm().max(1.0), "{fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn eval_counter_counts_evaluations_only() {
        let f = make_quadratic(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        assert_eq!(f.eval_count(), 0);
        f.eval(&[0.1]);
        f.eval(&[0.2]);
        f.gradient(&[0.2]).unwrap();
        assert_eq!(f.eval_count(), 2);
        f.reset_eval_count();
        assert_eq!(f.eval_count(), 0);
    }

    #[test]
    fn ridge_rejects_non_orthonormal_basis() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(make_ridge(u, RidgeProfile::Square), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn function_spec_parses_both_kinds() {
        let q = FunctionSpec::from_json(r#"{"A": [[1, 0], [0, 2]], "b": [0, 1]}"#).unwrap();
        assert!(matches!(q, FunctionSpec::Quadratic(_)));
        let r = FunctionSpec::from_json(r#"{"U": [[1], [0]], "profile": "square"}"#).unwrap();
        let f = r.build().unwrap();
        assert_eq!(f.eval(&[0.5, 3.0]), 0.25);
        assert!(f.ridge_basis().is_some());
    }

    #[test]
    fn random_instance_is_seeded() {
        assert_eq!(QuadraticSpec::random(4, 9), QuadraticSpec::random(4, 9));
        assert_ne!(QuadraticSpec::random(4, 9), QuadraticSpec::random(4, 10));
    }
}
