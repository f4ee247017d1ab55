//! Convergence studies: sweep the number of centers and the minimum neighbor
//! count, record the relative Frobenius error of each replication, and fit the
//! log-log slope of error against the neighbor budget.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    debiased_estimate_with, ideal_debiased_estimate_with, naive_estimate, oracle_estimate, DebiasOptions, EstimatorKind,
    MomentEstimate,
};
use crate::functions::{FunctionSpec, QuadraticSpec, TargetFunction};
use crate::measure::{epsilon_max, sample_interior_centers, sample_neighbors, Domain, Measure, SamplingMode};
use crate::rng::{derive_seed, Purpose};
use crate::stats::least_squares_line;

/// Maps `(N, N_min)` to the neighbor budget `N_{X,ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    /// `N_{X,ε} = factor · N · N_min`
    PerMinCount(usize),
    /// The same budget for every cell.
    Fixed(usize),
}

impl BudgetRule {
    pub fn neighbors(&self, n_centers: usize, n_min: usize) -> usize {
        match *self {
            BudgetRule::PerMinCount(factor) => factor * n_centers * n_min,
            BudgetRule::Fixed(total) => total,
        }
    }
}

impl Default for BudgetRule {
    fn default() -> Self {
        BudgetRule::PerMinCount(2)
    }
}

fn default_estimator() -> EstimatorKind {
    EstimatorKind::Debiased
}

/// Grid and protocol of a convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n: usize,
    pub epsilon: f64,
    pub n_min_values: Vec<usize>,
    pub n_values: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub budget: BudgetRule,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub sampling_mode: SamplingMode,
    /// Debias with the mean qualifying count rather than `N_min`.
    #[serde(default)]
    pub use_mean_count: bool,
    #[serde(default)]
    pub seed: u64,
}

impl StudyConfig {
    /// `n = 50`, `ε = 1e-4`, `N_min = 20`, `N ∈ {10, 50, 100, 500}`, 10
    /// replications.
    pub fn desk(seed: u64) -> Self {
        Self {
            n: 50,
            epsilon: 1e-4,
            n_min_values: vec![20],
            n_values: vec![10, 50, 100, 500],
            replications: 10,
            budget: BudgetRule::default(),
            estimator: EstimatorKind::Debiased,
            sampling_mode: SamplingMode::Exact,
            use_mean_count: false,
            seed,
        }
    }

    /// `n = 500`, `ε = 1e-4`, `N_min ∈ {50, 200, 400, 550}`,
    /// `N ∈ {10, 50, 100, 500, 1000}`, 10 replications.
    pub fn paper(seed: u64) -> Self {
        Self {
            n: 500,
            n_min_values: vec![50, 200, 400, 550],
            n_values: vec![10, 50, 100, 500, 1000],
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[usize]| !v.is_empty() && v.iter().all(|&x| x > 0);
        if self.n == 0 || !positive(&self.n_values) || !positive(&self.n_min_values) || self.replications == 0 {
            return Err(Error::InvalidArgument("study counts must be positive and grids nonempty".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let BudgetRule::PerMinCount(0) | BudgetRule::Fixed(0) = self.budget {
            return Err(Error::InvalidArgument("neighbor budget must be positive".into()));
        }
        Ok(())
    }
}

/// Study file: a [`StudyConfig`] plus an optional target. Without a target
/// the study uses a random quadratic seeded from the study seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyFile {
    #[serde(flatten)]
    pub config: StudyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
}

impl StudyFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.config.validate()?;
        Ok(file)
    }

    /// The target function, built from the file or generated.
    pub fn target(&self) -> Result<TargetFunction> {
        match &self.function {
            Some(spec) => spec.build(),
            None => default_target(&self.config),
        }
    }
}

/// Random quadratic of the study dimension, seeded from the study seed.
pub fn default_target(cfg: &StudyConfig) -> Result<TargetFunction> {
    QuadraticSpec::random(cfg.n, derive_seed(cfg.seed, Purpose::Instance, 0)).build()
}

/// One replication of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n_centers: usize,
    pub n_min: usize,
    pub n_total: usize,
    pub replication: usize,
    pub rel_error: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

const CENTER_RETRIES: usize = 100;

fn cell_seed(seed: u64, n_centers: usize, n_min: usize, replication: usize) -> u64 {
    let s = derive_seed(seed, Purpose::Cell, n_centers as u64);
    let s = derive_seed(s, Purpose::Cell, n_min as u64);
    derive_seed(s, Purpose::Cell, replication as u64)
}

/// Runs one cell: sample the design, estimate, compare against `Σ_μ`.
fn run_cell(cfg: &StudyConfig, f: &TargetFunction, measure: &Measure, key: (usize, usize, usize)) -> Result<StudyRow> {
    let (n_centers, n_min, replication) = key;
    let seed = cell_seed(cfg.seed, n_centers, n_min, replication);
    let truth = f.second_moment().ok_or(Error::MissingOracle("second-moment matrix"))?;
    let start = Instant::now();

    // Centers are drawn in the ε-interior; the whole set is redrawn when two
    // centers are closer than 2ε.
    let mut centers = None;
    for attempt in 0..CENTER_RETRIES {
        let x = sample_interior_centers(measure, n_centers, cfg.epsilon, derive_seed(seed, Purpose::Centers, attempt as u64))?;
        if epsilon_max(&x, measure.domain())? >= cfg.epsilon {
            centers = Some(x);
            break;
        }
    }
    let x = centers.ok_or(Error::RadiusTooLarge { epsilon: cfg.epsilon, limit: f64::NAN })?;
    let n_total = cfg.budget.neighbors(n_centers, n_min);

    let estimate: MomentEstimate = if cfg.estimator == EstimatorKind::Oracle {
        oracle_estimate(f, &x)?
    } else {
        let design = sample_neighbors(&x, cfg.epsilon, n_total, measure, cfg.sampling_mode, derive_seed(seed, Purpose::Neighbors, 0))?
            .with_min_count(n_min)?;
        let options = DebiasOptions { use_mean_count: cfg.use_mean_count, ..Default::default() };
        match cfg.estimator {
            EstimatorKind::Naive => naive_estimate(f, &design)?,
            EstimatorKind::Debiased => debiased_estimate_with(f, &design, options)?,
            EstimatorKind::IdealDebiased => ideal_debiased_estimate_with(f, &design, options)?,
            EstimatorKind::Oracle => unreachable!(),
        }
    };
    Ok(StudyRow {
        n_centers,
        n_min,
        n_total,
        replication,
        rel_error: estimate.relative_error(truth),
        wall_time_s: start.elapsed().as_secs_f64(),
        seed,
    })
}

/// Runs every `(N, N_min, replication)` cell under the uniform measure on
/// `[-1, 1]^n`. Rows come back sorted by `(N, N_min, replication)`.
pub fn run_study(cfg: &StudyConfig, f: &TargetFunction) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    if f.dim() != cfg.n {
        return Err(Error::DimensionMismatch { expected: cfg.n, actual: f.dim() });
    }
    if f.second_moment().is_none() {
        return Err(Error::MissingOracle("second-moment matrix"));
    }
    let measure = Measure::uniform(Domain::hypercube(cfg.n)?);
    let mut keys = Vec::new();
    for &n_centers in &cfg.n_values {
        for &n_min in &cfg.n_min_values {
            for rep in 0..cfg.replications {
                keys.push((n_centers, n_min, rep));
            }
        }
    }
    keys.sort_unstable();
    keys.dedup();
    keys.into_par_iter().map(|key| run_cell(cfg, f, &measure, key)).collect()
}

/// Least-squares line through `(log10 N_total, log10 mean error)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// Mean relative error per budget, ordered by budget.
pub fn mean_error_by_budget(rows: &[StudyRow]) -> Vec<(usize, f64)> {
    let mut groups: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for row in rows {
        let g = groups.entry(row.n_total).or_insert((0.0, 0));
        g.0 += row.rel_error;
        g.1 += 1;
    }
    groups.into_iter().map(|(k, (sum, c))| (k, sum / c as f64)).collect()
}

/// Median relative error per budget, ordered by budget.
pub fn median_error_by_budget(rows: &[StudyRow]) -> Vec<(usize, f64)> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.n_total).or_default().push(row.rel_error);
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let m = v.len();
            let median = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
            (k, median)
        })
        .collect()
}

pub fn fit_slope(rows: &[StudyRow]) -> Result<SlopeFit> {
    let points = mean_error_by_budget(rows);
    if points.iter().any(|(_, e)| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("errors must be positive for a log-log fit".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(k, _)| (*k as f64).log10()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.log10()).collect();
    let (slope, intercept, residual) = least_squares_line(&xs, &ys)
        .ok_or_else(|| Error::InvalidArgument("need at least two distinct neighbor budgets".into()))?;
    Ok(SlopeFit { slope, intercept, residual })
}

/// Separate fits for each `N_min` in the rows.
pub fn fit_slopes_by_n_min(rows: &[StudyRow]) -> Result<Vec<(usize, SlopeFit)>> {
    let mut groups: BTreeMap<usize, Vec<StudyRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(row.n_min).or_default().push(row.clone());
    }
    groups.into_iter().map(|(k, g)| fit_slope(&g).map(|fit| (k, fit))).collect()
}

pub const CSV_HEADER: &str = "N,N_min,N_total,replication,rel_error,seed";

/// CSV with 17 significant digits for the error column.
pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = CSV_HEADER.split(',').collect();
    w.write_record(&header).expect("writing to memory");
    for r in rows {
        w.write_record([
            r.n_centers.to_string(),
            r.n_min.to_string(),
            r.n_total.to_string(),
            r.replication.to_string(),
            format!("{:.16e}", r.rel_error),
            r.seed.to_string(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output")
}

#[derive(Deserialize)]
struct CsvRow {
    #[serde(rename = "N")]
    n_centers: usize,
    #[serde(rename = "N_min")]
    n_min: usize,
    #[serde(rename = "N_total")]
    n_total: usize,
    replication: usize,
    rel_error: f64,
    seed: u64,
}

/// Parses [`rows_to_csv`] output. Wall time is not persisted and reads back
/// as zero.
pub fn rows_from_csv(text: &str) -> Result<Vec<StudyRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Csv { line: 1, reason: e.to_string() })?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::Csv { line: 1, reason: format!("expected header {CSV_HEADER}") });
    }
    reader
        .deserialize::<CsvRow>()
        .map(|rec| {
            let r = rec.map_err(|e| Error::Csv {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                reason: e.to_string(),
            })?;
            Ok(StudyRow {
                n_centers: r.n_centers,
                n_min: r.n_min,
                n_total: r.n_total,
                replication: r.replication,
                rel_error: r.rel_error,
                wall_time_s: 0.0,
                seed: r.seed,
            })
        })
        .collect()
}

/// Log-log plot description for external plotting tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub series_by: String,
    /// Fit over all rows.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    /// Reference line `log10 y = slope · log10 x + intercept`.
    pub reference_line: ReferenceLine,
    pub fits_by_n_min: Vec<SeriesFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub field: String,
    pub label: String,
    pub scale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub slope: f64,
    pub intercept: f64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFit {
    pub n_min: usize,
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

/// CSV rows plus a plot description with the fitted reference line.
pub fn emit_plot_data(rows: &[StudyRow]) -> Result<(String, PlotSpec)> {
    let fit = fit_slope(rows)?;
    let fits = fit_slopes_by_n_min(rows).unwrap_or_default();
    let x_min = rows.iter().map(|r| r.n_total).min().unwrap_or(1) as f64;
    let x_max = rows.iter().map(|r| r.n_total).max().unwrap_or(1) as f64;
    let axis = |field: &str, label: &str| AxisSpec { field: field.into(), label: label.into(), scale: "log10".into() };
    let spec = PlotSpec {
        x: axis("N_total", "number of neighbor samples"),
        y: axis("rel_error", "relative Frobenius error"),
        series_by: "N_min".into(),
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        reference_line: ReferenceLine { slope: fit.slope, intercept: fit.intercept, x_min, x_max },
        fits_by_n_min: fits
            .into_iter()
            .map(|(n_min, f)| SeriesFit { n_min, slope: f.slope, intercept: f.intercept, residual: f.residual })
            .collect(),
    };
    Ok((rows_to_csv(rows), spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(n_total: usize, rep: usize, err: f64) -> StudyRow {
        StudyRow { n_centers: n_total / 10, n_min: 5, n_total, replication: rep, rel_error: err, wall_time_s: 0.1, seed: 7 }
    }

    #[test]
    fn exact_power_law_has_slope_minus_half() {
        let rows: Vec<StudyRow> = [100usize, 1000, 10_000, 100_000].iter().map(|&k| row(k, 0, 3.0 / (k as f64).sqrt())).collect();
        let fit = fit_slope(&rows).unwrap();
        assert_relative_eq!(fit.slope, -0.5, epsilon = 1e-10);
        assert_relative_eq!(fit.intercept, 3f64.log10(), epsilon = 1e-10);
    }

    #[test]
    fn constant_error_has_zero_slope() {
        let rows: Vec<StudyRow> = [100usize, 400, 1600].iter().map(|&k| row(k, 0, 0.2)).collect();
        assert!(fit_slope(&rows).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn single_budget_cannot_be_fit() {
        assert!(fit_slope(&[row(100, 0, 0.1), row(100, 1, 0.2)]).is_err());
    }

    #[test]
    fn csv_has_header_plus_one_line_per_row() {
        let rows = vec![row(100, 0, 0.1), row(100, 1, 0.2), row(200, 0, 1.0 / 3.0)];
        let csv = rows_to_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        let back = rows_from_csv(&csv).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!((a.n_centers, a.n_min, a.n_total, a.replication, a.seed), (b.n_centers, b.n_min, b.n_total, b.replication, b.seed));
            assert_eq!(a.rel_error.to_bits(), b.rel_error.to_bits());
        }
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(rows_from_csv("nope\n").is_err());
        assert!(matches!(rows_from_csv(&format!("{CSV_HEADER}\n1,2,3\n")), Err(Error::Csv { line: 2, .. })));
    }

    #[test]
    fn plot_spec_slope_matches_fit() {
        let rows = vec![row(100, 0, 0.3), row(100, 1, 0.25), row(1000, 0, 0.1), row(1000, 1, 0.08)];
        let (_, spec) = emit_plot_data(&rows).unwrap();
        assert_eq!(spec.slope, fit_slope(&rows).unwrap().slope);
        assert_eq!(spec.reference_line.slope, spec.slope);
    }

    #[test]
    fn budget_rule() {
        assert_eq!(BudgetRule::default().neighbors(10, 20), 400);
        assert_eq!(BudgetRule::Fixed(77).neighbors(10, 20), 77);
        let json = serde_json::to_string(&BudgetRule::PerMinCount(3)).unwrap();
        assert_eq!(json, r#"{"per_min_count":3}"#);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = StudyConfig::desk(1);
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = StudyConfig::desk(1);
        cfg.epsilon = -1.0;
        assert!(cfg.validate().is_err());
        assert!(StudyConfig::paper(1).validate().is_ok());
    }
}
