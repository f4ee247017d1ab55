//! Domains, probability measures and the two-stage sampling design.
//!
//! Centers are drawn from the base measure; neighbors are drawn from the base
//! measure conditioned on the union of the ε-balls around the centers. The
//! radius must not exceed [`epsilon_max`], which keeps every ball disjoint
//! from the others and inside the domain.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Axis-aligned box `[lower, upper]` in `R^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    /// The cube `[-1, 1]^n`.
    pub fn hypercube(n: usize) -> Result<Self> {
        Self::with_bounds(vec![-1.0; n], vec![1.0; n])
    }

    pub fn with_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidArgument("domain dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), actual: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidArgument("every axis needs finite bounds lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Distance from `x` to the complement of the box: positive inside, zero on
    /// the boundary, negative outside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&xi, (&lo, &hi))| (xi - lo).min(hi - xi))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.boundary_distance(x) >= 0.0
    }

    pub fn ln_volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| (hi - lo).ln()).sum()
    }

    fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (o, (lo, hi)) in out.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *o = lo + (hi - lo) * rng.random::<f64>();
        }
    }
}

/// Natural log of the volume of the Euclidean ball of radius `radius` in `R^n`.
pub fn ln_ball_volume(n: usize, radius: f64) -> f64 {
    // V_n = V_{n-2} * 2π / n with V_0 = 1 and V_1 = 2.
    let mut ln_unit = if n.is_multiple_of(2) { 0.0 } else { 2f64.ln() };
    let mut k = if n.is_multiple_of(2) { 2 } else { 3 };
    while k <= n {
        ln_unit += (2.0 * std::f64::consts::PI / k as f64).ln();
        k += 2;
    }
    ln_unit + n as f64 * radius.ln()
}

/// Density with respect to the uniform probability on the domain, possibly
/// unnormalized.
pub type DensityFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum MeasureKind {
    Uniform,
    /// Sampled by rejection against the uniform proposal; `density(x) <= bound`
    /// must hold everywhere.
    Rejection { bound: f64, density: DensityFn },
}

impl fmt::Debug for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureKind::Uniform => f.write_str("Uniform"),
            MeasureKind::Rejection { bound, .. } => {
                f.debug_struct("Rejection").field("bound", bound).finish_non_exhaustive()
            }
        }
    }
}

/// A probability measure on a [`Domain`].
#[derive(Debug, Clone)]
pub struct Measure {
    domain: Domain,
    kind: MeasureKind,
    max_attempts: usize,
    mass_samples: usize,
    mass_seed: u64,
}

impl Measure {
    pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

    pub fn uniform(domain: Domain) -> Self {
        Self {
            domain,
            kind: MeasureKind::Uniform,
            max_attempts: Self::DEFAULT_MAX_ATTEMPTS,
            mass_samples: 20_000,
            mass_seed: 0,
        }
    }

    pub fn rejection(domain: Domain, bound: f64, density: DensityFn) -> Result<Self> {
        if !(bound > 0.0) || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!("density bound must be positive, got {bound}")));
        }
        Ok(Self { kind: MeasureKind::Rejection { bound, density }, ..Self::uniform(domain) })
    }

    /// Attempts allowed per accepted point in rejection sampling.
    pub fn with_max_attempts(mut self, attempts: usize) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    /// Monte-Carlo settings used by [`ball_mass`] for non-uniform measures.
    pub fn with_mass_estimation(mut self, samples: usize, seed: u64) -> Self {
        self.mass_samples = samples.max(2);
        self.mass_seed = seed;
        self
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, MeasureKind::Uniform)
    }

    /// Largest radius for which the measure's local regularity is assumed.
    /// Unbounded for both supported kinds.
    pub fn epsilon_mu(&self) -> f64 {
        f64::INFINITY
    }

    /// Sub-exponential constant of the projection tail, known only for the
    /// uniform measure.
    pub fn isotropy_constant(&self) -> Option<f64> {
        self.is_uniform().then_some(0.5)
    }

    fn density_at(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            MeasureKind::Uniform => Ok(1.0),
            MeasureKind::Rejection { bound, density } => {
                let value = density(x);
                if !(value >= 0.0) {
                    return Err(Error::InvalidArgument(format!("density must be nonnegative, got {value}")));
                }
                if value > *bound {
                    return Err(Error::DensityBoundViolated { value, bound: *bound });
                }
                Ok(value / bound)
            }
        }
    }

    /// Accept/reject step: `Ok(true)` with probability `density(x) / bound`.
    fn accept<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<bool> {
        match self.kind {
            MeasureKind::Uniform => Ok(true),
            MeasureKind::Rejection { .. } => {
                let ratio = self.density_at(x)?;
                Ok(rng.random::<f64>() < ratio)
            }
        }
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        for _ in 0..self.max_attempts {
            self.domain.sample_uniform(rng, out);
            if self.accept(out, rng)? {
                return Ok(());
            }
        }
        Err(Error::RejectionBudgetExhausted { attempts: self.max_attempts })
    }
}

/// Draws a point uniformly from the open ball `B(center, radius)`, excluding
/// the center itself.
pub(crate) fn sample_in_ball<R: Rng + ?Sized>(center: &[f64], radius: f64, rng: &mut R, out: &mut [f64]) {
    let n = center.len();
    loop {
        let mut norm_sq = 0.0;
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o = z;
            norm_sq += z * z;
        }
        let u: f64 = rng.random();
        if norm_sq == 0.0 || u == 0.0 {
            continue;
        }
        let r = radius * u.powf(1.0 / n as f64);
        let scale = r / norm_sq.sqrt();
        let mut dist_sq = 0.0;
        for (o, c) in out.iter_mut().zip(center) {
            *o = c + scale * *o;
            dist_sq += (*o - c) * (*o - c);
        }
        let dist = dist_sq.sqrt();
        if dist > 0.0 && dist < radius {
            return;
        }
    }
}

/// Unit direction drawn uniformly from the sphere, obtained as the normalized
/// displacement of a uniform point in the unit ball.
pub(crate) fn sample_ball_direction<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut [f64]) {
    let origin = vec![0.0; n];
    sample_in_ball(&origin, 1.0, rng, out);
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    out.iter_mut().for_each(|v| *v /= norm);
}

/// Draws `count` i.i.d. points from `measure`, one column per point.
pub fn sample_centers(measure: &Measure, count: usize, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("number of centers must be at least 1".into()));
    }
    let n = measure.dim();
    let columns = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Centers, i as u64);
            let mut x = vec![0.0; n];
            measure.sample_point(&mut rng, &mut x)?;
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, count, |r, c| columns[c][r]))
}

/// Draws `count` i.i.d. points from `measure` conditioned on the
/// `margin`-interior of the domain (boundary distance at least `margin`).
/// Since centers are independent, this is the law of [`sample_centers`]
/// conditioned on every center lying in the interior.
pub fn sample_interior_centers(measure: &Measure, count: usize, margin: f64, seed: u64) -> Result<DMatrix<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("number of centers must be at least 1".into()));
    }
    let n = measure.dim();
    let columns = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Centers, i as u64);
            let mut x = vec![0.0; n];
            for _ in 0..measure.max_attempts {
                measure.sample_point(&mut rng, &mut x)?;
                if measure.domain.boundary_distance(&x) >= margin {
                    return Ok(x);
                }
            }
            Err(Error::RejectionBudgetExhausted { attempts: measure.max_attempts })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(n, count, |r, c| columns[c][r]))
}

/// Largest admissible neighborhood radius for the centers `x`: half the
/// smallest pairwise distance, capped by the smallest distance to the boundary.
pub fn epsilon_max(x: &DMatrix<f64>, domain: &Domain) -> Result<f64> {
    let count = x.ncols();
    if count == 0 {
        return Err(Error::InvalidArgument("epsilon_max needs at least one center".into()));
    }
    if x.nrows() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), actual: x.nrows() });
    }
    let mut boundary = f64::INFINITY;
    for c in x.column_iter() {
        let col: Vec<f64> = c.iter().copied().collect();
        let d = domain.boundary_distance(&col);
        if d < 0.0 {
            return Err(Error::OutsideDomain { epsilon: 0.0 });
        }
        boundary = boundary.min(d);
    }
    let half_gap = (0..count)
        .into_par_iter()
        .map(|i| {
            let xi = x.column(i);
            ((i + 1)..count)
                .map(|j| (xi - x.column(j)).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min)
        / 2.0;
    Ok(boundary.min(half_gap))
}

/// How neighbors are distributed across the balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// I.i.d. draws from the base measure conditioned on the union of balls.
    #[default]
    Exact,
    /// Ball chosen with probability proportional to its mass, then a uniform
    /// point inside the ball.
    LocallyUniform,
}

/// Centers, radius and the neighbors partitioned by center.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDesign {
    centers: DMatrix<f64>,
    epsilon: f64,
    /// Columns grouped by center, in center order.
    neighbors: DMatrix<f64>,
    assignment: Vec<usize>,
    offsets: Vec<usize>,
    min_count: usize,
    seed: u64,
}

impl SampleDesign {
    fn from_grouped(
        centers: DMatrix<f64>,
        epsilon: f64,
        groups: Vec<Vec<Vec<f64>>>,
        seed: u64,
    ) -> Self {
        let n = centers.nrows();
        let total: usize = groups.iter().map(Vec::len).sum();
        let mut neighbors = DMatrix::zeros(n, total);
        let mut assignment = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(groups.len() + 1);
        offsets.push(0);
        let mut col = 0;
        for (s, group) in groups.iter().enumerate() {
            for point in group {
                neighbors.column_mut(col).copy_from_slice(point);
                assignment.push(s);
                col += 1;
            }
            offsets.push(col);
        }
        Self { centers, epsilon, neighbors, assignment, offsets, min_count: 1, seed }
    }

    /// Builds a design from explicit neighbor lists, validating every
    /// invariant. `neighbors[s]` holds the neighbors of center `s`.
    pub fn from_parts(
        centers: DMatrix<f64>,
        epsilon: f64,
        neighbors: Vec<Vec<Vec<f64>>>,
        seed: u64,
    ) -> Result<Self> {
        if neighbors.len() != centers.ncols() {
            return Err(Error::DimensionMismatch { expected: centers.ncols(), actual: neighbors.len() });
        }
        let design = Self::from_grouped(centers, epsilon, neighbors, seed);
        design.validate()?;
        Ok(design)
    }

    /// Checks the geometric invariants: points strictly inside their ball and
    /// centers `2ε`-separated.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.neighbors.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: self.neighbors.nrows() });
        }
        for (j, &s) in self.assignment.iter().enumerate() {
            let d = (self.neighbors.column(j) - self.centers.column(s)).norm();
            if !(d > 0.0 && d < self.epsilon) {
                return Err(Error::InvalidArgument(format!(
                    "neighbor {j} lies at distance {d} from center {s}, outside (0, {})",
                    self.epsilon
                )));
            }
        }
        for i in 0..self.n_centers() {
            for k in (i + 1)..self.n_centers() {
                if (self.centers.column(i) - self.centers.column(k)).norm() < 2.0 * self.epsilon {
                    return Err(Error::InvalidArgument(format!("centers {i} and {k} are closer than 2ε")));
                }
            }
        }
        Ok(())
    }

    /// Sets the minimum neighbor count a center needs to enter the debiased sum.
    pub fn with_min_count(mut self, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::InvalidArgument("minimum neighbor count must be positive".into()));
        }
        self.min_count = min_count;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn n_centers(&self) -> usize {
        self.centers.ncols()
    }

    pub fn n_total(&self) -> usize {
        self.neighbors.ncols()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn centers(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn neighbors(&self) -> &DMatrix<f64> {
        &self.neighbors
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn count(&self, center: usize) -> usize {
        self.offsets[center + 1] - self.offsets[center]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Neighbors of center `s` as columns.
    pub fn neighbors_of(&self, center: usize) -> DMatrixView<'_, f64> {
        let start = self.offsets[center];
        self.neighbors.columns(start, self.offsets[center + 1] - start)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DesignDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DesignDocument = serde_json::from_str(text)?;
        doc.try_into()
    }
}

fn check_radius(x: &DMatrix<f64>, epsilon: f64, measure: &Measure) -> Result<()> {
    if x.nrows() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), actual: x.nrows() });
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    let limit = epsilon_max(x, measure.domain())?.min(measure.epsilon_mu());
    if epsilon > limit {
        return Err(Error::RadiusTooLarge { epsilon, limit });
    }
    Ok(())
}

/// Draws one point from the measure conditioned on `B(center, epsilon)`.
pub(crate) fn draw_conditional<R: Rng + ?Sized>(measure: &Measure, center: &[f64], epsilon: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
    for _ in 0..measure.max_attempts {
        sample_in_ball(center, epsilon, rng, out);
        if measure.accept(out, rng)? {
            return Ok(());
        }
    }
    Err(Error::RejectionBudgetExhausted { attempts: measure.max_attempts })
}

/// Fills one ball with `count` points from the conditional measure on it.
fn fill_ball(measure: &Measure, center: &[f64], epsilon: f64, count: usize, seed: u64, index: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = rng::stream(seed, Purpose::Neighbors, index as u64);
    (0..count)
        .map(|_| {
            let mut y = vec![0.0; center.len()];
            draw_conditional(measure, center, epsilon, &mut rng, &mut y)?;
            Ok(y)
        })
        .collect()
}

fn fill_balls(measure: &Measure, x: &DMatrix<f64>, epsilon: f64, counts: &[usize], seed: u64, uniform_inside: bool) -> Result<Vec<Vec<Vec<f64>>>> {
    let uniform = Measure::uniform(measure.domain().clone());
    let inner = if uniform_inside { &uniform } else { measure };
    (0..x.ncols())
        .into_par_iter()
        .map(|s| {
            let center: Vec<f64> = x.column(s).iter().copied().collect();
            fill_ball(inner, &center, epsilon, counts[s], seed, s)
        })
        .collect()
}

/// Draws `n_total` neighbors around the centers `x` and partitions them by
/// center.
pub fn sample_neighbors(
    x: &DMatrix<f64>,
    epsilon: f64,
    n_total: usize,
    measure: &Measure,
    mode: SamplingMode,
    seed: u64,
) -> Result<SampleDesign> {
    check_radius(x, epsilon, measure)?;
    if n_total == 0 {
        return Err(Error::InvalidArgument("number of neighbors must be at least 1".into()));
    }
    let count = x.ncols();
    let mut assign_rng = rng::stream(seed, Purpose::Assignment, 0);

    let groups = match (measure.kind(), mode) {
        (MeasureKind::Uniform, _) => {
            // Equal ball masses: the ball index is uniform.
            let mut counts = vec![0usize; count];
            for _ in 0..n_total {
                counts[assign_rng.random_range(0..count)] += 1;
            }
            fill_balls(measure, x, epsilon, &counts, seed, true)?
        }
        (MeasureKind::Rejection { .. }, SamplingMode::LocallyUniform) => {
            let masses = (0..count)
                .map(|s| {
                    let center: Vec<f64> = x.column(s).iter().copied().collect();
                    ball_mass(measure, &center, epsilon).map(|m| m.mass)
                })
                .collect::<Result<Vec<_>>>()?;
            let weights = WeightedIndex::new(&masses)
                .map_err(|e| Error::InvalidArgument(format!("ball masses unusable as weights: {e}")))?;
            let mut counts = vec![0usize; count];
            for _ in 0..n_total {
                counts[weights.sample(&mut assign_rng)] += 1;
            }
            fill_balls(measure, x, epsilon, &counts, seed, true)?
        }
        (MeasureKind::Rejection { .. }, SamplingMode::Exact) => {
            // Balls share one volume, so a uniform ball index followed by a
            // uniform point in it is uniform on the union; rejection then
            // reweights by the density.
            let n = x.nrows();
            let centers: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
            let mut groups = vec![Vec::new(); count];
            let mut y = vec![0.0; n];
            for _ in 0..n_total {
                let mut accepted = false;
                for _ in 0..measure.max_attempts {
                    let s = assign_rng.random_range(0..count);
                    sample_in_ball(&centers[s], epsilon, &mut assign_rng, &mut y);
                    if measure.accept(&y, &mut assign_rng)? {
                        groups[s].push(y.clone());
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::RejectionBudgetExhausted { attempts: measure.max_attempts });
                }
            }
            groups
        }
    };
    Ok(SampleDesign::from_grouped(x.clone(), epsilon, groups, seed))
}

/// Draws exactly `counts[s]` neighbors for center `s`. Conditioned on the
/// counts, this is the same law as [`sample_neighbors`] in exact mode.
pub fn sample_neighbors_with_counts(
    x: &DMatrix<f64>,
    epsilon: f64,
    counts: &[usize],
    measure: &Measure,
    seed: u64,
) -> Result<SampleDesign> {
    check_radius(x, epsilon, measure)?;
    if counts.len() != x.ncols() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), actual: counts.len() });
    }
    let groups = fill_balls(measure, x, epsilon, counts, seed, false)?;
    Ok(SampleDesign::from_grouped(x.clone(), epsilon, groups, seed))
}

/// Probability mass of a ball, with a Monte-Carlo standard error when it is
/// estimated rather than exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallMass {
    pub mass: f64,
    pub ln_mass: f64,
    pub std_error: f64,
}

/// Mean density and its standard error over `samples` uniform points drawn
/// by `draw`.
fn mean_density(measure: &Measure, samples: usize, seed: u64, index: u64, mut draw: impl FnMut(&mut rand_chacha::ChaCha8Rng, &mut [f64])) -> Result<(f64, f64)> {
    let mut rng = rng::stream(seed, Purpose::BallMass, index);
    let mut y = vec![0.0; measure.dim()];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        draw(&mut rng, &mut y);
        let d = measure.density_at(&y)?;
        sum += d;
        sum_sq += d * d;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
    Ok((mean, (var / m).sqrt()))
}

/// `μ(B(x, ε))`. Exact for the uniform measure; a ratio estimate from the
/// measure's Monte-Carlo settings otherwise.
pub fn ball_mass(measure: &Measure, x: &[f64], epsilon: f64) -> Result<BallMass> {
    if x.len() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), actual: x.len() });
    }
    if !(epsilon > 0.0) || measure.domain().boundary_distance(x) < epsilon {
        return Err(Error::OutsideDomain { epsilon });
    }
    let ln_ratio = ln_ball_volume(measure.dim(), epsilon) - measure.domain().ln_volume();
    match measure.kind() {
        MeasureKind::Uniform => Ok(BallMass { mass: ln_ratio.exp(), ln_mass: ln_ratio, std_error: 0.0 }),
        MeasureKind::Rejection { .. } => {
            let samples = measure.mass_samples;
            let (ball_mean, ball_se) = mean_density(measure, samples, measure.mass_seed, 1, |rng, y| {
                sample_in_ball(x, epsilon, rng, y)
            })?;
            let (domain_mean, domain_se) = mean_density(measure, samples, measure.mass_seed, 0, |rng, y| {
                measure.domain().sample_uniform(rng, y)
            })?;
            let ratio = ball_mean / domain_mean;
            let mass = ln_ratio.exp() * ratio;
            let rel = ((ball_se / ball_mean).powi(2) + (domain_se / domain_mean).powi(2)).sqrt();
            Ok(BallMass { mass, ln_mass: ln_ratio + ratio.ln(), std_error: mass * rel })
        }
    }
}

/// Uniformity index `N · min_x μ(B_x) / μ(∪ B_x)` of a design.
pub fn rho(design: &SampleDesign, measure: &Measure) -> Result<f64> {
    let count = design.n_centers();
    if count == 1 || measure.is_uniform() {
        return Ok(1.0);
    }
    // Disjoint balls of equal volume: only the mean densities matter.
    let masses = (0..count)
        .map(|s| {
            let center: Vec<f64> = design.centers().column(s).iter().copied().collect();
            if measure.domain().boundary_distance(&center) < design.epsilon() {
                return Err(Error::OutsideDomain { epsilon: design.epsilon() });
            }
            mean_density(measure, measure.mass_samples, measure.mass_seed, 1, |rng, y| {
                sample_in_ball(&center, design.epsilon(), rng, y)
            })
            .map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = masses.iter().sum();
    let min = masses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(count as f64 * min / total)
}

#[derive(Serialize, Deserialize)]
struct NeighborEntry {
    center_index: usize,
    point: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct DesignDocument {
    n: usize,
    N: usize,
    epsilon: f64,
    seed: u64,
    #[serde(default = "one")]
    min_count: usize,
    /// Row-major `n × N`.
    centers: Vec<Vec<f64>>,
    neighbors: Vec<NeighborEntry>,
}

fn one() -> usize {
    1
}

impl From<&SampleDesign> for DesignDocument {
    fn from(d: &SampleDesign) -> Self {
        Self {
            n: d.dim(),
            N: d.n_centers(),
            epsilon: d.epsilon,
            seed: d.seed,
            min_count: d.min_count,
            centers: d.centers.row_iter().map(|r| r.iter().copied().collect()).collect(),
            neighbors: d
                .assignment
                .iter()
                .enumerate()
                .map(|(j, &s)| NeighborEntry { center_index: s, point: d.neighbors.column(j).iter().copied().collect() })
                .collect(),
        }
    }
}

impl TryFrom<DesignDocument> for SampleDesign {
    type Error = Error;

    fn try_from(doc: DesignDocument) -> Result<Self> {
        if doc.centers.len() != doc.n || doc.centers.iter().any(|r| r.len() != doc.N) {
            return Err(Error::InvalidArgument("centers must be an n × N row-major matrix".into()));
        }
        let centers = DMatrix::from_fn(doc.n, doc.N, |r, c| doc.centers[r][c]);
        let mut groups = vec![Vec::new(); doc.N];
        for entry in doc.neighbors {
            if entry.center_index >= doc.N {
                return Err(Error::InvalidArgument(format!("center index {} out of range", entry.center_index)));
            }
            if entry.point.len() != doc.n {
                return Err(Error::DimensionMismatch { expected: doc.n, actual: entry.point.len() });
            }
            groups[entry.center_index].push(entry.point);
        }
        SampleDesign::from_parts(centers, doc.epsilon, groups, doc.seed)?.with_min_count(doc.min_count)
    }
}
