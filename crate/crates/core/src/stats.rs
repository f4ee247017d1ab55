//! Monte-Carlo accumulators and the distribution functions used by the
//! statistical checks.

use std::convert::Infallible;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::rng::{self, Purpose};

/// Running per-coordinate mean and variance (Welford), mergeable across
/// chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl MeanAccumulator {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, sample: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(sample) {
            let delta = v - *m;
            *m += delta / k;
            *s += delta * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let total = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / total;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / total;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance per coordinate.
    pub fn variance(&self) -> Vec<f64> {
        let denom = (self.count.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    /// Standard error of each coordinate's mean.
    pub fn std_error(&self) -> Vec<f64> {
        let k = self.count.max(1) as f64;
        self.variance().into_iter().map(|v| (v / k).sqrt()).collect()
    }
}

/// Samples handled by one work item in [`parallel_mean`].
pub const CHUNK: usize = 4096;

/// Mean of `samples` draws of a `dim`-vector, computed in fixed chunks that
/// each own a random stream and merged in chunk order. The result depends
/// only on `(samples, seed)`, never on the thread count.
pub fn parallel_mean<F>(dim: usize, samples: usize, seed: u64, draw: F) -> MeanAccumulator
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let result: Result<_, Infallible> = try_parallel_mean(dim, samples, seed, |rng, out| {
        draw(rng, out);
        Ok(())
    });
    match result {
        Ok(acc) => acc,
        Err(never) => match never {},
    }
}

/// [`parallel_mean`] for draws that can fail; stops at the first failing draw
/// and returns its error.
pub fn try_parallel_mean<F, E>(dim: usize, samples: usize, seed: u64, draw: F) -> Result<MeanAccumulator, E>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<(), E> + Sync,
    E: Send,
{
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<MeanAccumulator> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, Purpose::Chunk, c as u64);
            let mut acc = MeanAccumulator::new(dim);
            let mut buf = vec![0.0; dim];
            let len = CHUNK.min(samples - c * CHUNK);
            for _ in 0..len {
                draw(&mut rng, &mut buf)?;
                acc.push(&buf);
            }
            Ok(acc)
        })
        .collect::<Result<_, E>>()?;
    Ok(partial.iter().fold(MeanAccumulator::new(dim), |mut acc, p| {
        acc.merge(p);
        acc
    }))
}

/// Standard error of a norm-like aggregate: `sqrt(Σ se_i²)`. For a vector of
/// independent mean estimates this is the root of the expected squared
/// Euclidean (or Frobenius) deviation.
pub fn combined_std_error(se: &[f64]) -> f64 {
    se.iter().map(|s| s * s).sum::<f64>().sqrt()
}

pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`, i.e. the CDF of
/// `beta(a, b)` at `x`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_m - F|`. Sorts `samples`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let m = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / m).max((i + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic. Sorts both inputs.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2k²λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series converges slowly here; Q is 1 to double precision.
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `λ_α` with `Q(λ_α) = α`, by bisection.
pub fn kolmogorov_quantile(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Asymptotic one-sample KS critical value at level `alpha` for `m` samples.
pub fn ks_critical_value(alpha: f64, m: usize) -> f64 {
    kolmogorov_quantile(alpha) / (m as f64).sqrt()
}

/// Asymptotic two-sample KS critical value.
pub fn ks_two_sample_critical_value(alpha: f64, m: usize, k: usize) -> f64 {
    let (m, k) = (m as f64, k as f64);
    kolmogorov_quantile(alpha) * ((m + k) / (m * k)).sqrt()
}

/// Ordinary least squares fit `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, residual sum of squares)`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let m = xs.len();
    if m < 2 || m != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / m as f64;
    let my = ys.iter().sum::<f64>() / m as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    Some((slope, intercept, rss))
}
