//! Recover the active subspace of a ridge function from point evaluations.

use amoment::functions::RidgeSpec;
use amoment::measure::{sample_neighbors, SamplingMode};
use amoment::verify::separated_interior_centers;
use amoment::{debiased_estimate, subspace_recovery_report, Domain, Measure, RidgeProfile};

fn main() -> amoment::Result<()> {
    let (n, r) = (10, 2);
    let f = RidgeSpec::random(n, r, RidgeProfile::SumOfSquares, 4).build()?;
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let (epsilon, n_min) = (1e-4, 20);

    for n_centers in [20, 100, 500, 2500] {
        let x = separated_interior_centers(&measure, n_centers, epsilon, 1)?;
        let design = sample_neighbors(&x, epsilon, 2 * n_centers * n_min, &measure, SamplingMode::Exact, 2)?
            .with_min_count(n_min)?;
        let report = subspace_recovery_report(&f, &debiased_estimate(&f, &design)?, r)?;
        println!(
            "N = {n_centers:>4}: largest principal angle {:.4} rad, eigen-gap {:.3}",
            report.principal_angle_rad, report.eigen_gap
        );
    }
    Ok(())
}
