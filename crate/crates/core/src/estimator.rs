//! Second-moment estimators.
//!
//! * [`oracle_estimate`]: `(1/N) Σ ∇f(x)∇f(x)*` from exact gradients.
//! * [`naive_estimate`]: the same average over finite-difference gradients.
//! * [`debiased_estimate`]: the point-query estimator. It keeps centers with at
//!   least `N_min` neighbors and removes the bias that random rank-1
//!   projections introduce:
//!
//! ```text
//! Σ̈ = (1/N) · c₁ · Σ_{N_x ≥ N_min} ( ġ ġ* - ‖ġ‖² / c₂ · I )
//! c₁ = (1 + (1 - 2/n) / (1 + 2/n) / N_min)⁻¹
//! c₂ = (1 + 2/n) N_min + n + 1 - 2/n
//! ```
//!
//! * [`ideal_debiased_estimate`]: the same formula with projected exact
//!   gradients in place of finite differences.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TargetFunction;
use crate::gradients::{fd_gradient_from_value, ideal_gradient};
use crate::measure::{draw_conditional, Measure, SampleDesign};
use crate::rng::{derive_seed, Purpose};
use crate::stats::{combined_std_error, try_parallel_mean};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Oracle,
    Naive,
    Debiased,
    IdealDebiased,
}

/// A symmetric `n × n` estimate with the sample sizes that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: EstimatorKind,
    pub n: usize,
    pub n_centers: usize,
    pub n_total: Option<usize>,
    pub n_min: Option<usize>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    /// Centers that entered the sum.
    pub included_centers: usize,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct EstimateDocument {
    kind: EstimatorKind,
    n: usize,
    N: usize,
    N_total: Option<usize>,
    N_min: Option<usize>,
    epsilon: Option<f64>,
    seed: Option<u64>,
    matrix: Vec<Vec<f64>>,
}

impl MomentEstimate {
    fn new(matrix: DMatrix<f64>, kind: EstimatorKind, n_centers: usize, included: usize) -> Self {
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        Self {
            n: matrix.nrows(),
            matrix,
            kind,
            n_centers,
            n_total: None,
            n_min: None,
            epsilon: None,
            seed: None,
            included_centers: included,
        }
    }

    fn with_design(mut self, design: &SampleDesign, n_min: Option<usize>) -> Self {
        self.n_total = Some(design.n_total());
        self.n_min = n_min;
        self.epsilon = Some(design.epsilon());
        self.seed = Some(design.seed());
        self
    }

    /// Relative Frobenius error against a reference matrix.
    pub fn relative_error(&self, reference: &DMatrix<f64>) -> f64 {
        (&self.matrix - reference).norm() / reference.norm()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = EstimateDocument {
            kind: self.kind,
            n: self.n,
            N: self.n_centers,
            N_total: self.n_total,
            N_min: self.n_min,
            epsilon: self.epsilon,
            seed: self.seed,
            matrix: self.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EstimateDocument = serde_json::from_str(text)?;
        if doc.matrix.len() != doc.n || doc.matrix.iter().any(|r| r.len() != doc.n) {
            return Err(Error::InvalidArgument("matrix must be n × n".into()));
        }
        let matrix = DMatrix::from_fn(doc.n, doc.n, |i, j| doc.matrix[i][j]);
        Ok(Self {
            included_centers: doc.N,
            n_total: doc.N_total,
            n_min: doc.N_min,
            epsilon: doc.epsilon,
            seed: doc.seed,
            ..Self::new(matrix, doc.kind, doc.N, doc.N)
        })
    }
}

/// Scalar prefactor `(1 + (1 - 2/n)/(1 + 2/n) / N_min)⁻¹`.
pub fn debias_prefactor(n: usize, n_min: usize) -> f64 {
    prefactor(n, n_min as f64)
}

fn prefactor(n: usize, count: f64) -> f64 {
    let n = n as f64;
    let ratio = (1.0 - 2.0 / n) / (1.0 + 2.0 / n);
    1.0 / (1.0 + ratio / count)
}

/// Denominator `(1 + 2/n) N_min + n + 1 - 2/n` of the identity correction.
pub fn identity_denominator(n: usize, n_min: usize) -> f64 {
    denominator(n, n_min as f64)
}

fn denominator(n: usize, count: f64) -> f64 {
    let n = n as f64;
    (1.0 + 2.0 / n) * count + n + 1.0 - 2.0 / n
}

/// Options for the debiased estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DebiasOptions {
    /// Divide by the number of qualifying centers instead of `N`.
    pub normalize_by_included: bool,
    /// Build the two constants from the mean count of the qualifying centers
    /// instead of `N_min`. The correction is exact when every qualifying
    /// center has the same count, so this removes the residual bias left when
    /// counts run well above the threshold.
    pub use_mean_count: bool,
}

const REDUCE_CHUNK: usize = 32;

/// `Σ v v*` over `vectors` and `Σ ‖v‖²`, reduced over fixed-size chunks in
/// index order so the result is independent of scheduling.
fn sum_outer_products(n: usize, vectors: &[DVector<f64>]) -> (DMatrix<f64>, f64) {
    let partial: Vec<(DMatrix<f64>, f64)> = vectors
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut m = DMatrix::zeros(n, n);
            let mut sq = 0.0;
            for v in chunk {
                m.ger(1.0, v, v, 1.0);
                sq += v.norm_squared();
            }
            (m, sq)
        })
        .collect();
    partial.into_iter().fold((DMatrix::zeros(n, n), 0.0), |(acc, s), (m, q)| (acc + m, s + q))
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Sample mean of exact-gradient outer products over the columns of `x`.
pub fn oracle_estimate(f: &TargetFunction, x: &DMatrix<f64>) -> Result<MomentEstimate> {
    if !f.has_gradient() {
        return Err(Error::MissingOracle("gradient"));
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidArgument("need at least one center".into()));
    }
    if x.nrows() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), actual: x.nrows() });
    }
    let grads = (0..x.ncols())
        .into_par_iter()
        .map(|j| f.gradient(&column(x, j)))
        .collect::<Result<Vec<_>>>()?;
    let (sum, _) = sum_outer_products(f.dim(), &grads);
    Ok(MomentEstimate::new(sum / x.ncols() as f64, EstimatorKind::Oracle, x.ncols(), x.ncols()))
}

/// Finite-difference gradients per center; `None` for centers without
/// neighbors. Evaluates `f` at every center and every neighbor exactly once.
fn fd_gradients(f: &TargetFunction, design: &SampleDesign) -> Result<Vec<Option<DVector<f64>>>> {
    if design.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), actual: design.dim() });
    }
    (0..design.n_centers())
        .into_par_iter()
        .map(|s| {
            let x = column(design.centers(), s);
            let fx = f.eval(&x);
            if design.count(s) == 0 {
                return Ok(None);
            }
            fd_gradient_from_value(f, &x, fx, design.neighbors_of(s)).map(Some)
        })
        .collect()
}

fn ideal_gradients(f: &TargetFunction, design: &SampleDesign) -> Result<Vec<Option<DVector<f64>>>> {
    if design.dim() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), actual: design.dim() });
    }
    if !f.has_gradient() {
        return Err(Error::MissingOracle("gradient"));
    }
    (0..design.n_centers())
        .into_par_iter()
        .map(|s| {
            if design.count(s) == 0 {
                return Ok(None);
            }
            let x = column(design.centers(), s);
            let g = f.gradient(&x)?;
            ideal_gradient(&g, &x, design.neighbors_of(s)).map(Some)
        })
        .collect()
}

/// Plain average of finite-difference gradient outer products.
pub fn naive_estimate(f: &TargetFunction, design: &SampleDesign) -> Result<MomentEstimate> {
    let grads = fd_gradients(f, design)?;
    let grads = grads
        .into_iter()
        .enumerate()
        .map(|(s, g)| g.ok_or(Error::EmptyNeighborhood { center: s }))
        .collect::<Result<Vec<_>>>()?;
    let (sum, _) = sum_outer_products(f.dim(), &grads);
    let count = design.n_centers();
    Ok(MomentEstimate::new(sum / count as f64, EstimatorKind::Naive, count, count).with_design(design, None))
}

fn debias(
    n: usize,
    design: &SampleDesign,
    grads: Vec<Option<DVector<f64>>>,
    kind: EstimatorKind,
    options: DebiasOptions,
) -> Result<MomentEstimate> {
    let n_min = design.min_count();
    let kept: Vec<DVector<f64>> = grads
        .into_iter()
        .enumerate()
        .filter(|(s, g)| g.is_some() && design.count(*s) >= n_min)
        .map(|(_, g)| g.expect("filtered"))
        .collect();
    if kept.is_empty() {
        return Err(Error::NoQualifyingCenters { n_min });
    }
    let count = if options.use_mean_count {
        let total: usize = (0..design.n_centers()).map(|s| design.count(s)).filter(|&c| c >= n_min && c > 0).sum();
        total as f64 / kept.len() as f64
    } else {
        n_min as f64
    };
    let (mut sum, sq) = sum_outer_products(n, &kept);
    let shift = sq / denominator(n, count);
    for i in 0..n {
        sum[(i, i)] -= shift;
    }
    let normalizer = if options.normalize_by_included { kept.len() } else { design.n_centers() };
    let matrix = sum * (prefactor(n, count) / normalizer as f64);
    Ok(MomentEstimate::new(matrix, kind, design.n_centers(), kept.len()).with_design(design, Some(n_min)))
}

/// The point-query estimator with the design's `N_min` filter.
pub fn debiased_estimate(f: &TargetFunction, design: &SampleDesign) -> Result<MomentEstimate> {
    debiased_estimate_with(f, design, DebiasOptions::default())
}

pub fn debiased_estimate_with(f: &TargetFunction, design: &SampleDesign, options: DebiasOptions) -> Result<MomentEstimate> {
    let grads = fd_gradients(f, design)?;
    debias(f.dim(), design, grads, EstimatorKind::Debiased, options)
}

/// The debiased formula applied to projected exact gradients.
pub fn ideal_debiased_estimate(f: &TargetFunction, design: &SampleDesign) -> Result<MomentEstimate> {
    ideal_debiased_estimate_with(f, design, DebiasOptions::default())
}

pub fn ideal_debiased_estimate_with(f: &TargetFunction, design: &SampleDesign, options: DebiasOptions) -> Result<MomentEstimate> {
    let grads = ideal_gradients(f, design)?;
    debias(f.dim(), design, grads, EstimatorKind::IdealDebiased, options)
}

/// Deterministic bound `½ε²H²n² + 2εLHn²` on the Frobenius distance between
/// the finite-difference and ideal debiased estimates.
pub fn fd_ideal_gap_bound(n: usize, epsilon: f64, grad_bound: f64, hessian_bound: f64) -> f64 {
    let n2 = (n * n) as f64;
    0.5 * epsilon * epsilon * hessian_bound * hessian_bound * n2 + 2.0 * epsilon * grad_bound * hessian_bound * n2
}

/// Monte-Carlo estimates of the measure/function bias constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConstants {
    /// `n · sup_x ‖E[P] - I/n‖₂`
    pub b_prime: f64,
    /// `n² · sup_x ‖E[P g g* P] - (2gg* + ‖g‖²I)/(n(n+2))‖_F`
    pub b_double_prime: f64,
    /// `2B''/N_min + 4B'(B'+1)L² + 2L²(1+√n)/N_min`
    pub b_total: f64,
    pub b_prime_std_error: f64,
    pub b_double_prime_std_error: f64,
    pub b_total_std_error: f64,
}

/// Assembles the total bias constant from its parts.
pub fn combine_bias_constants(n: usize, n_min: usize, b_prime: f64, b_double_prime: f64, grad_bound: f64) -> f64 {
    let l2 = grad_bound * grad_bound;
    let n_min = n_min as f64;
    2.0 * b_double_prime / n_min + 4.0 * b_prime * (b_prime + 1.0) * l2 + 2.0 * l2 * (1.0 + (n as f64).sqrt()) / n_min
}


/// Estimates `B'`, `B''` and `B` with the supremum over the domain replaced by
/// a maximum over the probe points (columns of `probes`).
pub fn bias_constants(
    measure: &Measure,
    f: &TargetFunction,
    epsilon: f64,
    n_min: usize,
    probes: &DMatrix<f64>,
    mc_samples: usize,
    seed: u64,
) -> Result<BiasConstants> {
    let n = measure.dim();
    if probes.nrows() != n || f.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: probes.nrows() });
    }
    if n_min == 0 || mc_samples < 2 || probes.ncols() == 0 {
        return Err(Error::InvalidArgument("need n_min >= 1, mc_samples >= 2 and at least one probe".into()));
    }
    let grad_bound = f.grad_bound().ok_or(Error::MissingOracle("gradient bound"))?;
    let nf = n as f64;
    let (mut b1, mut b1_se, mut b2, mut b2_se) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (p, probe) in probes.column_iter().enumerate() {
        let x: Vec<f64> = probe.iter().copied().collect();
        if measure.domain().boundary_distance(&x) < epsilon {
            return Err(Error::OutsideDomain { epsilon });
        }
        let g = f.gradient(&x)?;
        // Each sample packs P (n²) followed by P g g* P (n²).
        let acc = try_parallel_mean(2 * n * n, mc_samples, derive_seed(seed, Purpose::Probe, p as u64), |rng, out| {
            let mut y = vec![0.0; n];
            draw_conditional(measure, &x, epsilon, rng, &mut y)?;
            let d = DVector::from_iterator(n, y.iter().zip(&x).map(|(a, b)| a - b));
            let u = &d / d.norm();
            let pg = &u * u.dot(&g);
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = u[i] * u[j];
                    out[n * n + i * n + j] = pg[i] * pg[j];
                }
            }
            Ok::<(), Error>(())
        })?;
        let mean = acc.mean();
        let se = acc.std_error();
        let first = DMatrix::from_row_slice(n, n, &mean[..n * n]) - DMatrix::identity(n, n) / nf;
        let closed = (&g * g.transpose() * 2.0 + DMatrix::identity(n, n) * g.norm_squared()) / (nf * (nf + 2.0));
        let second = DMatrix::from_row_slice(n, n, &mean[n * n..]) - closed;
        b1 = b1.max(nf * first.symmetric_eigenvalues().amax());
        b1_se = b1_se.max(nf * combined_std_error(&se[..n * n]));
        b2 = b2.max(nf * nf * second.norm());
        b2_se = b2_se.max(nf * nf * combined_std_error(&se[n * n..]));
    }
    let b_total = combine_bias_constants(n, n_min, b1, b2, grad_bound);
    let l2 = grad_bound * grad_bound;
    let b_total_std_error = 2.0 * b2_se / n_min as f64 + 4.0 * (2.0 * b1 + 1.0) * l2 * b1_se;
    Ok(BiasConstants {
        b_prime: b1,
        b_double_prime: b2,
        b_total,
        b_prime_std_error: b1_se,
        b_double_prime_std_error: b2_se,
        b_total_std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::make_quadratic;
    use crate::measure::{sample_centers, sample_neighbors, Domain, SamplingMode};
    use approx::assert_relative_eq;

    fn linear(b: &[f64]) -> TargetFunction {
        make_quadratic(DMatrix::zeros(b.len(), b.len()), DVector::from_row_slice(b)).unwrap()
    }

    fn design(n: usize, centers: usize, total: usize, seed: u64) -> SampleDesign {
        let m = Measure::uniform(Domain::hypercube(n).unwrap());
        let x = sample_centers(&m, centers, seed).unwrap();
        let eps = 0.5 * crate::measure::epsilon_max(&x, m.domain()).unwrap();
        sample_neighbors(&x, eps, total, &m, SamplingMode::Exact, seed + 1).unwrap()
    }

    #[test]
    fn constants_at_two_dimensions() {
        assert_eq!(debias_prefactor(2, 7), 1.0);
        assert_eq!(identity_denominator(2, 7), 2.0 * 7.0 + 2.0);
        // n = 1: ratio -1/3, denominator 3 N_min.
        assert_relative_eq!(debias_prefactor(1, 4), 1.0 / (1.0 - 1.0 / 12.0), epsilon = 1e-15);
        assert_relative_eq!(identity_denominator(1, 4), 12.0, epsilon = 1e-15);
    }

    #[test]
    fn oracle_of_linear_function_is_outer_product() {
        let f = linear(&[1.0, -2.0, 0.5]);
        let x = DMatrix::from_fn(3, 7, |i, j| (i as f64 - j as f64) * 0.1);
        let est = oracle_estimate(&f, &x).unwrap();
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert_relative_eq!(est.matrix, &b * b.transpose(), epsilon = 1e-14);
        assert_eq!(est.kind, EstimatorKind::Oracle);
    }

    #[test]
    fn oracle_requires_gradient() {
        let f = TargetFunction::new(2, std::sync::Arc::new(|x: &[f64]| x[0]));
        assert!(matches!(oracle_estimate(&f, &DMatrix::zeros(2, 1)), Err(Error::MissingOracle(_))));
    }

    #[test]
    fn zero_function_gives_zero_matrix() {
        let f = linear(&[0.0, 0.0]);
        let d = design(2, 4, 40, 2);
        assert_eq!(naive_estimate(&f, &d).unwrap().matrix, DMatrix::zeros(2, 2));
    }

    #[test]
    fn eval_budget_is_one_per_point() {
        let f = linear(&[1.0, 1.0, 1.0]);
        let d = design(3, 10, 100, 4);
        debiased_estimate(&f, &d).unwrap();
        assert_eq!(f.eval_count(), 110);
        naive_estimate(&f, &d).unwrap();
        assert_eq!(f.eval_count(), 220);
    }

    #[test]
    fn one_dimensional_debiased_equals_naive() {
        // At n = 1 the prefactor and identity shift cancel exactly.
        let f = make_quadratic(DMatrix::from_element(1, 1, 1.5), DVector::from_element(1, 0.3)).unwrap();
        let d = design(1, 5, 60, 3).with_min_count(1).unwrap();
        let naive = naive_estimate(&f, &d).unwrap();
        let debiased = debiased_estimate(&f, &d).unwrap();
        assert_relative_eq!(naive.matrix, debiased.matrix, epsilon = 1e-14);
    }

    #[test]
    fn no_qualifying_centers_is_an_error() {
        let f = linear(&[1.0, 0.0]);
        let d = design(2, 3, 6, 5).with_min_count(100).unwrap();
        assert!(matches!(debiased_estimate(&f, &d), Err(Error::NoQualifyingCenters { n_min: 100 })));
    }

    #[test]
    fn naive_rejects_empty_neighborhoods() {
        let f = linear(&[1.0, 0.0]);
        let d = design(2, 50, 3, 6);
        assert!(matches!(naive_estimate(&f, &d), Err(Error::EmptyNeighborhood { .. })));
    }

    #[test]
    fn included_normalization_rescales() {
        let f = linear(&[1.0, 2.0]);
        let d = design(2, 30, 60, 8).with_min_count(2).unwrap();
        let verbatim = debiased_estimate(&f, &d).unwrap();
        let included = debiased_estimate_with(&f, &d, DebiasOptions { normalize_by_included: true, ..Default::default() }).unwrap();
        assert!(verbatim.included_centers < 30);
        let ratio = 30.0 / verbatim.included_centers as f64;
        assert_relative_eq!(included.matrix, verbatim.matrix * ratio, epsilon = 1e-12);
    }

    #[test]
    fn bias_constant_assembly() {
        assert_relative_eq!(combine_bias_constants(4, 10, 0.0, 0.0, 1.0), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn estimate_json_round_trip() {
        let f = linear(&[1.0, 2.0]);
        let d = design(2, 4, 40, 2).with_min_count(3).unwrap();
        let est = debiased_estimate(&f, &d).unwrap();
        let text = est.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "debiased");
        assert_eq!(v["N_min"], 3);
        let back = MomentEstimate::from_json(&text).unwrap();
        assert_eq!(back.matrix, est.matrix);
    }
}
