//! Runnable statistical checks of the identities the estimator relies on.
//!
//! Each check is a pure function of its parameters and seed and returns a
//! [`CheckResult`] with `passed == (statistic <= threshold)`. Monte-Carlo
//! thresholds are `5·σ_MC`, plus a deterministic bound where one is known.
//! Frobenius and Euclidean comparisons use `σ_MC = sqrt(Σ se_i²)` over the
//! entries compared. A few checks also allow `1e-12` times the target scale
//! for floating-point rounding, which matters only when `σ_MC` is zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{debiased_estimate, fd_ideal_gap_bound, ideal_debiased_estimate, oracle_estimate};
use crate::functions::{QuadraticSpec, TargetFunction};
use crate::measure::{
    epsilon_max, sample_ball_direction, sample_in_ball, sample_interior_centers, sample_neighbors,
    sample_neighbors_with_counts, Domain, Measure, SamplingMode,
};
use crate::rng::{derive_seed, Purpose};
use crate::stats::{
    combined_std_error, ks_critical_value, ks_statistic, parallel_mean, regularized_incomplete_beta, try_parallel_mean,
};

const SIGMAS: f64 = 5.0;
const ROUNDING: f64 = 1e-12;
const KS_LEVEL: f64 = 1e-3;

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    /// Check name with its parameters and threshold rule.
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub sigma_mc: f64,
    pub passed: bool,
    pub samples_used: u64,
    pub seed: u64,
    /// Negative control: the check is expected to fail.
    #[serde(default)]
    pub negative_control: bool,
}

impl CheckResult {
    fn new(name: String, statistic: f64, threshold: f64, sigma_mc: f64, samples_used: u64, seed: u64) -> Self {
        Self { name, statistic, threshold, sigma_mc, passed: statistic <= threshold, samples_used, seed, negative_control: false }
    }

    fn into_control(mut self) -> Self {
        self.negative_control = true;
        self
    }

    /// Passed for ordinary checks, failed for negative controls.
    pub fn as_expected(&self) -> bool {
        self.passed != self.negative_control
    }
}

/// `‖mean P - I/n‖_F` over `samples` uniform directions.
pub fn check_isotropy_first_moment(n: usize, samples: usize, seed: u64) -> Result<CheckResult> {
    if n == 0 || samples < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two samples".into()));
    }
    let acc = parallel_mean(n * n, samples, seed, |rng, out| {
        let mut u = vec![0.0; n];
        sample_ball_direction(n, rng, &mut u);
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = u[i] * u[j];
            }
        }
    });
    let mean = DMatrix::from_row_slice(n, n, acc.mean());
    let target = DMatrix::<f64>::identity(n, n) / n as f64;
    let sigma = combined_std_error(&acc.std_error());
    let threshold = SIGMAS * sigma + ROUNDING * target.norm();
    Ok(CheckResult::new(
        format!("isotropy_first_moment(n={n}): |mean P - I/n|_F <= 5 sigma_mc + 1e-12 |I/n|_F"),
        (mean - target).norm(),
        threshold,
        sigma,
        samples as u64,
        seed,
    ))
}

/// `‖mean P g g* P - (2 g g* + ‖g‖² I)/(n(n+2))‖_F`.
pub fn check_isotropy_second_moment(n: usize, g: &DVector<f64>, samples: usize, seed: u64) -> Result<CheckResult> {
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: g.len() });
    }
    if n == 0 || samples < 2 {
        return Err(Error::InvalidArgument("need n >= 1 and at least two samples".into()));
    }
    if g.norm() == 0.0 {
        return Err(Error::InvalidArgument("g must be nonzero".into()));
    }
    let acc = parallel_mean(n * n, samples, seed, |rng, out| {
        let mut u = vec![0.0; n];
        sample_ball_direction(n, rng, &mut u);
        let c = u.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = c * c * u[i] * u[j];
            }
        }
    });
    let nf = n as f64;
    let mean = DMatrix::from_row_slice(n, n, acc.mean());
    let target = (g * g.transpose() * 2.0 + DMatrix::identity(n, n) * g.norm_squared()) / (nf * (nf + 2.0));
    let sigma = combined_std_error(&acc.std_error());
    let threshold = SIGMAS * sigma + ROUNDING * target.norm();
    Ok(CheckResult::new(
        format!("isotropy_second_moment(n={n}): |mean PggP - closed form|_F <= 5 sigma_mc + 1e-12 |closed form|_F"),
        (mean - target).norm(),
        threshold,
        sigma,
        samples as u64,
        seed,
    ))
}

/// Squared projected lengths `‖P e₁‖² = u₁²` for `samples` directions,
/// drawn in the same chunked order as the mean-based checks.
pub fn projected_lengths(n: usize, samples: usize, seed: u64) -> Vec<f64> {
    use rayon::prelude::*;
    let chunks = samples.div_ceil(crate::stats::CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = crate::rng::stream(seed, Purpose::Chunk, c as u64);
            let len = crate::stats::CHUNK.min(samples - c * crate::stats::CHUNK);
            let mut u = vec![0.0; n];
            (0..len)
                .map(|_| {
                    sample_ball_direction(n, &mut rng, &mut u);
                    u[0] * u[0]
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Kolmogorov-Smirnov test of `‖P v‖²` against `beta(1/2, (n-1)/2)`.
pub fn check_beta_law(n: usize, samples: usize, seed: u64) -> Result<CheckResult> {
    if n < 2 {
        return Err(Error::InvalidArgument("the projected length is degenerate for n = 1".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut t = projected_lengths(n, samples, seed);
    let b = (n as f64 - 1.0) / 2.0;
    let ks = ks_statistic(&mut t, |x| regularized_incomplete_beta(0.5, b, x));
    let critical = ks_critical_value(KS_LEVEL, samples);
    Ok(CheckResult::new(
        format!("beta_law(n={n}): KS distance <= 0.1% critical value"),
        ks,
        critical,
        critical / crate::stats::kolmogorov_quantile(KS_LEVEL),
        samples as u64,
        seed,
    ))
}

/// Tail probabilities `Pr[‖P v‖² > β/n]` against `C e^{-β/2}`, with `C`
/// fitted at the smallest `β`. The statistic is the largest excess
/// `p̂(β) - C e^{-β/2} - 5σ(β)`; it passes at or below zero. Tail counts
/// come from one sample set, so they are non-increasing in `β` by
/// construction.
pub fn check_tail_assumption(n: usize, samples: usize, betas: &[f64], seed: u64) -> Result<CheckResult> {
    if n < 2 || samples == 0 {
        return Err(Error::InvalidArgument("need n >= 2 and at least one sample".into()));
    }
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidArgument("betas must be positive and nonempty".into()));
    }
    let t = projected_lengths(n, samples, seed);
    let m = samples as f64;
    let tails: Vec<(f64, f64, f64)> = betas
        .iter()
        .map(|&beta| {
            let p = t.iter().filter(|&&v| v > beta / n as f64).count() as f64 / m;
            (beta, p, (p * (1.0 - p) / m).sqrt())
        })
        .collect();
    let (beta0, p0, _) = tails.iter().copied().min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty");
    let c = p0 * (beta0 / 2.0).exp();
    let excess = tails.iter().map(|(beta, p, s)| p - c * (-beta / 2.0).exp() - SIGMAS * s).fold(f64::NEG_INFINITY, f64::max);
    let sigma = tails.iter().map(|t| t.2).fold(0.0, f64::max);
    let list = betas.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",");
    Ok(CheckResult::new(
        format!("tail_assumption(n={n}, beta={{{list}}}): max(p - C exp(-beta/2) - 5 sigma_mc) <= 0"),
        excess,
        0.0,
        sigma,
        samples as u64,
        seed,
    ))
}

/// Fraction of trials in which some center's neighbor count leaves
/// `[½, 3/2]·N_total/N`, compared against 1%.
///
/// Runs the real sampler on `N` evenly spaced, disjoint one-dimensional
/// balls, which have equal mass under the uniform measure.
pub fn check_neighbor_concentration(n_centers: usize, n_total: usize, trials: usize, seed: u64) -> Result<CheckResult> {
    if n_centers == 0 || n_total == 0 || trials == 0 {
        return Err(Error::InvalidArgument("counts must be positive".into()));
    }
    let measure = Measure::uniform(Domain::hypercube(1)?);
    let spacing = 2.0 / n_centers as f64;
    let x = DMatrix::from_fn(1, n_centers, |_, j| -1.0 + spacing * (j as f64 + 0.5));
    let epsilon = 0.45 * spacing;
    let expected = n_total as f64 / n_centers as f64;
    let mut failures = 0usize;
    for trial in 0..trials {
        let design =
            sample_neighbors(&x, epsilon, n_total, &measure, SamplingMode::Exact, derive_seed(seed, Purpose::Assignment, trial as u64))?;
        if design.counts().iter().any(|&c| (c as f64) < 0.5 * expected || (c as f64) > 1.5 * expected) {
            failures += 1;
        }
    }
    let rate = failures as f64 / trials as f64;
    Ok(CheckResult::new(
        format!("neighbor_concentration(N={n_centers}, N_total={n_total}): failure rate <= 0.01"),
        rate,
        0.01,
        (rate * (1.0 - rate) / trials as f64).sqrt(),
        trials as u64,
        seed,
    ))
}

/// `‖mean ideal debiased estimate - oracle estimate(X)‖_F` over
/// `replications` neighbor draws with every count fixed to the same value.
pub fn check_unbiasedness_special_case(
    f: &TargetFunction,
    x: &DMatrix<f64>,
    epsilon: f64,
    counts: &[usize],
    replications: usize,
    seed: u64,
) -> Result<CheckResult> {
    let count = *counts.first().ok_or_else(|| Error::InvalidArgument("counts must be nonempty".into()))?;
    if count == 0 || counts.iter().any(|&c| c != count) {
        return Err(Error::InvalidArgument("neighbor counts must be equal and positive".into()));
    }
    if replications < 2 {
        return Err(Error::InvalidArgument("need at least two replications".into()));
    }
    let n = f.dim();
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let oracle = oracle_estimate(f, x)?.matrix;
    let acc = try_parallel_mean(n * n, replications, seed, |rng, out| {
        let design = sample_neighbors_with_counts(x, epsilon, counts, &measure, rng.random())?.with_min_count(count)?;
        let est = ideal_debiased_estimate(f, &design)?;
        out.copy_from_slice(est.matrix.transpose().as_slice());
        Ok::<(), Error>(())
    })?;
    let mean = DMatrix::from_row_slice(n, n, acc.mean());
    let sigma = combined_std_error(&acc.std_error());
    Ok(CheckResult::new(
        format!(
            "unbiasedness_special_case(n={n}, N={}, N_x={count}): |mean - oracle|_F <= 5 sigma_mc + 1e-12 |oracle|_F",
            x.ncols()
        ),
        (mean - &oracle).norm(),
        SIGMAS * sigma + ROUNDING * oracle.norm(),
        sigma,
        replications as u64,
        seed,
    ))
}

/// Bias of the single-neighbor finite-difference gradient at `x`,
/// estimated as the mean of `ġ - n P ∇f(x)`. Under the uniform measure
/// `E[n P] = I`, so this has the same expectation as `ġ - ∇f(x)` with far less
/// variance. Returns the bias norm and its `σ_MC`.
fn gradient_bias(f: &TargetFunction, x: &[f64], epsilon: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let n = f.dim();
    let g = f.gradient(x)?;
    let fx = f.eval(x);
    let nf = n as f64;
    let acc = parallel_mean(n, samples, seed, |rng, out| {
        let mut y = vec![0.0; n];
        sample_in_ball(x, epsilon, rng, &mut y);
        let d: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
        let dist_sq: f64 = d.iter().map(|v| v * v).sum();
        let secant = (f.eval(&y) - fx) / dist_sq;
        let exact = d.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>() / dist_sq;
        for (o, di) in out.iter_mut().zip(&d) {
            *o = nf * (secant - exact) * di;
        }
    });
    let bias = acc.mean().iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((bias, combined_std_error(&acc.std_error())))
}

fn check_gradient_inputs(f: &TargetFunction, x: &[f64], epsilon: f64) -> Result<f64> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), actual: x.len() });
    }
    let h = f.hessian_bound().ok_or(Error::MissingOracle("Hessian bound"))?;
    if !f.has_gradient() {
        return Err(Error::MissingOracle("gradient"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if Domain::hypercube(f.dim())?.boundary_distance(x) < epsilon {
        return Err(Error::OutsideDomain { epsilon });
    }
    Ok(h)
}

/// `‖E ġ(x) - ∇f(x)‖₂ <= ε H n / 2 + 5 σ_MC` for the uniform measure on
/// `[-1, 1]^n`, with one neighbor per draw.
pub fn check_gradient_bias_bound(f: &TargetFunction, x: &[f64], epsilon: f64, samples: usize, seed: u64) -> Result<CheckResult> {
    let h = check_gradient_inputs(f, x, epsilon)?;
    let (bias, sigma) = gradient_bias(f, x, epsilon, samples, seed)?;
    let n = f.dim();
    Ok(CheckResult::new(
        format!("gradient_bias_bound(n={n}, eps={epsilon:e}): |bias|_2 <= eps H n / 2 + 5 sigma_mc"),
        bias,
        epsilon * h * n as f64 / 2.0 + SIGMAS * sigma,
        sigma,
        samples as u64,
        seed,
    ))
}

/// Halving `ε` at least halves the measured bias budget `|bias| + 5σ_MC`.
/// Both radii share the seed, so the draws differ only in scale. The
/// statistic is the ratio of budgets at `ε/2` and `ε`; it may exceed ½ by at
/// most `1e-6` relative, to absorb rounding in `f(y) - f(x)`.
pub fn check_gradient_bias_scaling(f: &TargetFunction, x: &[f64], epsilon: f64, samples: usize, seed: u64) -> Result<CheckResult> {
    check_gradient_inputs(f, x, epsilon)?;
    let (b1, s1) = gradient_bias(f, x, epsilon, samples, seed)?;
    let (b2, s2) = gradient_bias(f, x, epsilon / 2.0, samples, seed)?;
    let full = b1 + SIGMAS * s1;
    let half = b2 + SIGMAS * s2;
    let ratio = if full > 0.0 { half / full } else { 0.0 };
    Ok(CheckResult::new(
        format!("gradient_bias_scaling(n={}, eps={epsilon:e}): budget(eps/2) / budget(eps) <= 0.5 (1 + 1e-6)", f.dim()),
        ratio,
        0.5 * (1.0 + 1e-6),
        s2,
        2 * samples as u64,
        seed,
    ))
}

/// Largest ratio of `‖Σ̈ - Σ⃛‖_F` to its deterministic bound over `designs`
/// random designs; passes at or below 1. Each design draws a fresh random
/// quadratic, `N` interior centers and `2·N·N_min` neighbors.
pub fn check_fd_ideal_gap(n: usize, epsilon: f64, n_centers: usize, n_min: usize, designs: usize, seed: u64) -> Result<CheckResult> {
    if n == 0 || designs == 0 {
        return Err(Error::InvalidArgument("need n >= 1 and at least one design".into()));
    }
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let mut worst = 0.0f64;
    for d in 0..designs {
        let s = derive_seed(seed, Purpose::Instance, d as u64);
        let f = QuadraticSpec::random(n, s).build()?;
        let bound = fd_ideal_gap_bound(
            n,
            epsilon,
            f.grad_bound().ok_or(Error::MissingOracle("gradient bound"))?,
            f.hessian_bound().ok_or(Error::MissingOracle("Hessian bound"))?,
        );
        let x = separated_interior_centers(&measure, n_centers, epsilon, s)?;
        let design = sample_neighbors(&x, epsilon, 2 * n_centers * n_min, &measure, SamplingMode::Exact, s)?.with_min_count(n_min)?;
        let gap = match (debiased_estimate(&f, &design), ideal_debiased_estimate(&f, &design)) {
            (Ok(a), Ok(b)) => (a.matrix - b.matrix).norm(),
            (Err(Error::NoQualifyingCenters { .. }), Err(Error::NoQualifyingCenters { .. })) => 0.0,
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        worst = worst.max(gap / bound);
    }
    Ok(CheckResult::new(
        format!("fd_ideal_gap(n={n}, eps={epsilon:e}): max |fd - ideal|_F / bound <= 1"),
        worst,
        1.0,
        0.0,
        designs as u64,
        seed,
    ))
}

/// Interior centers that are also `2ε`-separated, redrawn up to 100 times.
pub fn separated_interior_centers(measure: &Measure, count: usize, epsilon: f64, seed: u64) -> Result<DMatrix<f64>> {
    for attempt in 0..100u64 {
        let x = sample_interior_centers(measure, count, epsilon, derive_seed(seed, Purpose::Centers, attempt))?;
        if epsilon_max(&x, measure.domain())? >= epsilon {
            return Ok(x);
        }
    }
    Err(Error::RadiusTooLarge { epsilon, limit: f64::NAN })
}

/// A named group of checks for the command-line runner.
pub struct NamedCheck {
    pub name: &'static str,
    pub run: fn(u64) -> Result<Vec<CheckResult>>,
}

fn sub(seed: u64, index: u64) -> u64 {
    derive_seed(seed, Purpose::Probe, index)
}

fn suite_first_moment(seed: u64) -> Result<Vec<CheckResult>> {
    [1usize, 3, 10].iter().map(|&n| check_isotropy_first_moment(n, 1_000_000, sub(seed, n as u64))).collect()
}

fn suite_second_moment(seed: u64) -> Result<Vec<CheckResult>> {
    let random_g = QuadraticSpec::random(10, sub(seed, 100)).b;
    let cases = [
        DVector::from_element(1, 1.5),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        DVector::from_vec(random_g),
    ];
    cases.iter().map(|g| check_isotropy_second_moment(g.len(), g, 1_000_000, sub(seed, g.len() as u64))).collect()
}

fn suite_beta(seed: u64) -> Result<Vec<CheckResult>> {
    [2usize, 5, 10, 50].iter().map(|&n| check_beta_law(n, 100_000, sub(seed, n as u64))).collect()
}

fn suite_tail(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![check_tail_assumption(20, 1_000_000, &[2.0, 4.0, 8.0], sub(seed, 20))?])
}

fn suite_concentration(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_neighbor_concentration(20, 2000, 1000, sub(seed, 0))?,
        check_neighbor_concentration(20, 40, 1000, sub(seed, 1))?.into_control(),
    ])
}

fn suite_unbiasedness(seed: u64) -> Result<Vec<CheckResult>> {
    let (n, n_centers, count, epsilon) = (5, 10, 8, 1e-2);
    let f = QuadraticSpec::random(n, sub(seed, 0)).build()?;
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let x = separated_interior_centers(&measure, n_centers, epsilon, sub(seed, 1))?;
    Ok(vec![check_unbiasedness_special_case(&f, &x, epsilon, &[count; 10], 10_000, sub(seed, 2))?])
}

fn suite_gradient_bias(seed: u64) -> Result<Vec<CheckResult>> {
    let n = 10;
    let f = QuadraticSpec::random(n, sub(seed, 0)).build()?;
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let x: Vec<f64> = sample_interior_centers(&measure, 1, 0.1, sub(seed, 1))?.iter().copied().collect();
    let mut out = Vec::new();
    for (i, eps) in [1e-2, 1e-3].into_iter().enumerate() {
        out.push(check_gradient_bias_bound(&f, &x, eps, 100_000, sub(seed, 2 + i as u64))?);
        out.push(check_gradient_bias_scaling(&f, &x, eps, 100_000, sub(seed, 2 + i as u64))?);
    }
    Ok(out)
}

fn suite_gap(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (i, &n) in [2usize, 10, 50].iter().enumerate() {
        for (j, &eps) in [1e-2, 1e-4].iter().enumerate() {
            out.push(check_fd_ideal_gap(n, eps, 5, 4, 100, sub(seed, (10 * i + j) as u64))?);
        }
    }
    Ok(out)
}

/// Every check group, in a fixed order.
pub fn registry() -> Vec<NamedCheck> {
    vec![
        NamedCheck { name: "isotropy_first_moment", run: suite_first_moment },
        NamedCheck { name: "isotropy_second_moment", run: suite_second_moment },
        NamedCheck { name: "beta_law", run: suite_beta },
        NamedCheck { name: "tail_assumption", run: suite_tail },
        NamedCheck { name: "neighbor_concentration", run: suite_concentration },
        NamedCheck { name: "unbiasedness_special_case", run: suite_unbiasedness },
        NamedCheck { name: "gradient_bias_bound", run: suite_gradient_bias },
        NamedCheck { name: "fd_ideal_gap", run: suite_gap },
    ]
}

/// Runs the named groups (all when `only` is empty). Unknown names are an
/// error.
pub fn run_checks(only: &[String], seed: u64) -> Result<Vec<CheckResult>> {
    let all = registry();
    if let Some(bad) = only.iter().find(|o| !all.iter().any(|c| c.name == o.as_str())) {
        return Err(Error::InvalidArgument(format!("unknown check {bad:?}")));
    }
    let mut results = Vec::new();
    for (i, check) in all.iter().enumerate() {
        if only.is_empty() || only.iter().any(|o| o == check.name) {
            results.extend((check.run)(sub(seed, 1000 + i as u64))?);
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::make_quadratic;

    #[test]
    fn one_dimensional_moments_are_exact() {
        let r = check_isotropy_first_moment(1, 1000, 3).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.passed);
        let r = check_isotropy_second_moment(1, &DVector::from_element(1, 1.7), 1000, 3).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn small_moment_checks_pass() {
        assert!(check_isotropy_first_moment(5, 100_000, 1).unwrap().passed);
        let g = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(check_isotropy_second_moment(3, &g, 100_000, 2).unwrap().passed);
    }

    #[test]
    fn second_moment_rejects_bad_g() {
        assert!(check_isotropy_second_moment(3, &DVector::zeros(3), 100, 0).is_err());
        assert!(check_isotropy_second_moment(3, &DVector::zeros(2), 100, 0).is_err());
    }

    #[test]
    fn beta_law_passes_and_rejects_n1() {
        assert!(check_beta_law(2, 20_000, 5).unwrap().passed);
        assert!(check_beta_law(1, 100, 5).is_err());
    }

    #[test]
    fn tail_beyond_n_is_empty() {
        let t = projected_lengths(4, 10_000, 9);
        assert!(t.iter().all(|&v| v <= 1.0 + 1e-15));
        let r = check_tail_assumption(4, 10_000, &[1.0, 5.0], 9).unwrap();
        assert!(r.passed);
    }

    #[test]
    fn single_center_concentration_is_trivial() {
        let r = check_neighbor_concentration(1, 50, 20, 4).unwrap();
        assert_eq!(r.statistic, 0.0);
        let starved = check_neighbor_concentration(20, 40, 50, 4).unwrap();
        assert!(!starved.passed);
    }

    #[test]
    fn unbiasedness_rejects_unequal_counts() {
        let f = make_quadratic(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let x = DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]);
        assert!(check_unbiasedness_special_case(&f, &x, 0.1, &[3, 4], 10, 0).is_err());
    }

    #[test]
    fn unbiasedness_in_one_dimension_is_deterministic() {
        let f = make_quadratic(DMatrix::from_element(1, 1, 0.7), DVector::from_element(1, 0.2)).unwrap();
        let x = DMatrix::from_row_slice(1, 3, &[-0.5, 0.0, 0.5]);
        let r = check_unbiasedness_special_case(&f, &x, 0.1, &[4, 4, 4], 50, 1).unwrap();
        assert!(r.statistic <= 1e-12, "{r:?}");
        assert!(r.passed);
    }

    #[test]
    fn linear_function_has_no_gradient_bias() {
        let f = make_quadratic(DMatrix::zeros(3, 3), DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        let r = check_gradient_bias_bound(&f, &[0.0; 3], 0.01, 10_000, 2).unwrap();
        assert!(r.statistic < 1e-12, "{r:?}");
        assert!(check_gradient_bias_bound(&f, &[0.995, 0.0, 0.0], 0.01, 10, 2).is_err());
    }

    #[test]
    fn control_semantics() {
        let r = CheckResult::new("x".into(), 1.0, 0.5, 0.0, 1, 0);
        assert!(!r.as_expected());
        assert!(r.into_control().as_expected());
    }

    #[test]
    fn unknown_check_is_rejected() {
        assert!(run_checks(&["nope".into()], 0).is_err());
    }
}
