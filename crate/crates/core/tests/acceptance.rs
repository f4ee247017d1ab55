//! End-to-end acceptance gate. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use amoment::experiments::{default_target, fit_slope, rows_to_csv, run_study, StudyConfig, StudyRow};
use amoment::measure::{sample_centers, sample_neighbors};
use amoment::stats::{least_squares_line, parallel_mean};
use amoment::verify::{
    check_beta_law, check_gradient_bias_bound, check_gradient_bias_scaling, check_isotropy_first_moment,
    check_isotropy_second_moment, check_neighbor_concentration, check_tail_assumption, check_unbiasedness_special_case,
    separated_interior_centers, CheckResult,
};
use amoment::{
    debiased_estimate, ideal_debiased_estimate, oracle_estimate, Domain, Measure, QuadraticSpec, SamplingMode,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn all_expected(results: &[CheckResult]) -> Outcome {
    let bad: Vec<&str> = results.iter().filter(|r| !r.as_expected()).map(|r| r.name.as_str()).collect();
    verdict(bad.is_empty(), if bad.is_empty() { format!("{} checks", results.len()) } else { format!("failed: {bad:?}") })
}

fn desk_rows(seed: u64) -> Vec<StudyRow> {
    let cfg = StudyConfig::desk(seed);
    run_study(&cfg, &default_target(&cfg).unwrap()).unwrap()
}

fn convergence_slope() -> Outcome {
    let start = Instant::now();
    let rows = desk_rows(2024);
    let slope = fit_slope(&rows).map_err(|e| e.to_string())?.slope;
    let elapsed = start.elapsed();
    verdict(
        (-0.65..=-0.35).contains(&slope) && elapsed < Duration::from_secs(300),
        format!("slope {slope:.4} (target [-0.65, -0.35]), {} rows in {elapsed:.1?}", rows.len()),
    )
}

fn oracle_rate() -> Outcome {
    let n = 20;
    let spec = QuadraticSpec::random(n, 77);
    let f = spec.build().unwrap();
    let (a, b) = spec.matrices().unwrap();
    // Closed form computed here rather than taken from the library.
    let truth = &a * &a / 3.0 + &b * b.transpose();
    let measure = Measure::uniform(Domain::hypercube(n).unwrap());

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, size) in [100usize, 1_000, 10_000, 100_000].into_iter().enumerate() {
        let mean: f64 = (0..10)
            .map(|rep| {
                let x = sample_centers(&measure, size, (100 * i + rep) as u64).unwrap();
                (oracle_estimate(&f, &x).unwrap().matrix - &truth).norm()
            })
            .sum::<f64>()
            / 10.0;
        xs.push((size as f64).log10());
        ys.push(mean.log10());
    }
    let (slope, _, _) = least_squares_line(&xs, &ys).unwrap();

    let draws = 10_000;
    let acc = parallel_mean(n * n, draws, 5, |rng, out| {
        let x = sample_centers(&measure, 10, rng.random()).unwrap();
        out.copy_from_slice(oracle_estimate(&f, &x).unwrap().matrix.as_slice());
    });
    let mean = DMatrix::from_column_slice(n, n, acc.mean());
    let se = DMatrix::from_column_slice(n, n, &acc.std_error());
    let worst = (0..n * n).map(|k| (mean[k] - truth[k]).abs() / (5.0 * se[k])).fold(0.0f64, f64::max);
    verdict(
        (slope + 0.5).abs() <= 0.15 && worst <= 1.0,
        format!("slope {slope:.4} (target -0.5 ± 0.15); worst entry at {worst:.3} of 5 sigma_mc"),
    )
}

fn deterministic_sandwich() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in [2usize, 10, 50] {
        let measure = Measure::uniform(Domain::hypercube(n).unwrap());
        for eps in [1e-2, 1e-4] {
            for d in 0..100u64 {
                let seed = 1_000 * n as u64 + d + if eps < 1e-3 { 500 } else { 0 };
                let f = QuadraticSpec::random(n, seed).build().unwrap();
                let (h, l) = (f.hessian_bound().unwrap(), f.grad_bound().unwrap());
                let n2 = (n * n) as f64;
                let bound = 0.5 * eps * eps * h * h * n2 + 2.0 * eps * l * h * n2;
                let x = separated_interior_centers(&measure, 5, eps, seed).unwrap();
                let design = sample_neighbors(&x, eps, 40, &measure, SamplingMode::Exact, seed)
                    .unwrap()
                    .with_min_count(2)
                    .unwrap();
                let gap = match (debiased_estimate(&f, &design), ideal_debiased_estimate(&f, &design)) {
                    (Ok(fd), Ok(ideal)) => (fd.matrix - ideal.matrix).norm(),
                    _ => continue,
                };
                worst = worst.max(gap / bound);
                cases += 1;
            }
        }
    }
    verdict(worst <= 1.0 && cases == 600, format!("{cases} designs, largest gap/bound {worst:.3e}"))
}

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let (n, eps) = (5, 1e-2);
    let f = QuadraticSpec::random(n, 31).build().unwrap();
    let measure = Measure::uniform(Domain::hypercube(n).unwrap());
    let x = separated_interior_centers(&measure, 10, eps, 32).unwrap();
    let r = check_unbiasedness_special_case(&f, &x, eps, &[8; 10], 10_000, 33).unwrap();
    let elapsed = start.elapsed();
    verdict(
        r.passed && elapsed < Duration::from_secs(120),
        format!("{:.3e} <= {:.3e} in {elapsed:.1?}", r.statistic, r.threshold),
    )
}

fn distributional_identities() -> Outcome {
    let mut results = Vec::new();
    for n in [2usize, 5, 10, 50] {
        results.push(check_beta_law(n, 100_000, 40 + n as u64).unwrap());
    }
    for n in [1usize, 3, 10] {
        results.push(check_isotropy_first_moment(n, 1_000_000, 50 + n as u64).unwrap());
        let g = DVector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
        results.push(check_isotropy_second_moment(n, &g, 1_000_000, 60 + n as u64).unwrap());
    }
    results.push(check_tail_assumption(20, 1_000_000, &[2.0, 4.0, 8.0], 70).unwrap());
    all_expected(&results)
}

fn gradient_bias() -> Outcome {
    let n = 10;
    let f = QuadraticSpec::random(n, 80).build().unwrap();
    let x = vec![0.2; n];
    let mut results = Vec::new();
    for eps in [1e-2, 1e-3] {
        results.push(check_gradient_bias_bound(&f, &x, eps, 100_000, 81).unwrap());
        results.push(check_gradient_bias_scaling(&f, &x, eps, 100_000, 81).unwrap());
    }
    all_expected(&results)
}

fn neighbor_concentration() -> Outcome {
    let positive = check_neighbor_concentration(20, 2000, 1000, 90).unwrap();
    let starved = check_neighbor_concentration(20, 40, 1000, 91).unwrap();
    verdict(
        positive.passed && !starved.passed,
        format!("failure rate {:.3} (must be <= 0.01); starved control {:.3} (must exceed 0.01)", positive.statistic, starved.statistic),
    )
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| rows_to_csv(&desk_rows(7)))
    };
    let single = run(1);
    let many = run(8);
    verdict(single == many, format!("{} bytes, 1 vs 8 threads", single.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("convergence slope", convergence_slope),
        ("oracle rate and mean", oracle_rate),
        ("finite-difference vs ideal gap bound", deterministic_sandwich),
        ("unbiasedness with equal counts", unbiasedness),
        ("distributional identities", distributional_identities),
        ("gradient bias bound", gradient_bias),
        ("neighbor concentration", neighbor_concentration),
        ("determinism across thread counts", determinism),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
