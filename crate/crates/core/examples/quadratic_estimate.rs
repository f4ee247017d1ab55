//! Compare the naive, debiased and exact-gradient estimates on a quadratic.

use amoment::measure::{sample_neighbors, SamplingMode};
use amoment::verify::separated_interior_centers;
use amoment::estimator::{debiased_estimate_with, DebiasOptions};
use amoment::{debiased_estimate, naive_estimate, oracle_estimate, Domain, Measure, QuadraticSpec};

fn main() -> amoment::Result<()> {
    let n = 20;
    let f = QuadraticSpec::random(n, 3).build()?;
    let sigma = f.second_moment().expect("quadratics know their moment").clone();
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let (epsilon, n_min) = (1e-4, 10);

    // The second debiased column builds its constants from the mean count of
    // the qualifying centers rather than from N_min.
    let mean_count = DebiasOptions { use_mean_count: true, ..Default::default() };
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "N", "oracle", "naive", "debiased", "mean-count");
    for n_centers in [50, 200, 800, 3200] {
        let x = separated_interior_centers(&measure, n_centers, epsilon, n_centers as u64)?;
        let design = sample_neighbors(&x, epsilon, 2 * n_centers * n_min, &measure, SamplingMode::Exact, 7)?
            .with_min_count(n_min)?;
        let oracle = oracle_estimate(&f, &x)?;
        let naive = naive_estimate(&f, &design)?;
        let debiased = debiased_estimate(&f, &design)?;
        let adjusted = debiased_estimate_with(&f, &design, mean_count)?;
        println!(
            "{n_centers:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            oracle.relative_error(&sigma),
            naive.relative_error(&sigma),
            debiased.relative_error(&sigma),
            adjusted.relative_error(&sigma)
        );
    }
    Ok(())
}
