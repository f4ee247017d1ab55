//! Sampling under a non-uniform density, and the bias constants it induces.

use std::sync::Arc;

use amoment::estimator::bias_constants;
use amoment::measure::{ball_mass, rho, sample_neighbors};
use amoment::verify::separated_interior_centers;
use amoment::{Domain, Measure, QuadraticSpec, SamplingMode};
use nalgebra::DMatrix;

fn main() -> amoment::Result<()> {
    let n = 4;
    // Density proportional to 1 + x₁/2 on [-1, 1]^n, bounded by 1.5.
    let measure = Measure::rejection(Domain::hypercube(n)?, 1.5, Arc::new(|x: &[f64]| 1.0 + 0.5 * x[0]))?;
    let f = QuadraticSpec::random(n, 8).build()?;

    let epsilon = 0.05;
    let x = separated_interior_centers(&measure, 4, epsilon, 3)?;
    for mode in [SamplingMode::Exact, SamplingMode::LocallyUniform] {
        let design = sample_neighbors(&x, epsilon, 4000, &measure, mode, 5)?;
        println!("{mode:?}: counts {:?}, rho {:.3}", design.counts(), rho(&design, &measure)?);
    }
    let mass = ball_mass(&measure, &[0.0; 4], epsilon)?;
    println!("ball mass at the origin: {:.3e} ± {:.1e}", mass.mass, mass.std_error);

    let probes = DMatrix::from_column_slice(n, 2, &[0.5, 0.0, 0.0, 0.0, -0.5, 0.2, 0.0, 0.0]);
    let b = bias_constants(&measure, &f, epsilon, 20, &probes, 20_000, 11)?;
    println!("B' = {:.3e}, B'' = {:.3e}, B = {:.3e}", b.b_prime, b.b_double_prime, b.b_total);
    Ok(())
}
