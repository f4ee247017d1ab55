//! Finite-difference and projected-gradient estimates at one point.

use amoment::gradients::{fd_gradient, ideal_gradient};
use amoment::measure::{sample_neighbors, SamplingMode};
use amoment::{Domain, Measure, QuadraticSpec};
use nalgebra::DMatrix;

fn main() -> amoment::Result<()> {
    let n = 6;
    let f = QuadraticSpec::random(n, 5).build()?;
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let x = DMatrix::from_element(n, 1, 0.1);
    let xs: Vec<f64> = x.iter().copied().collect();
    let exact = f.gradient(&xs)?;

    for count in [10, 100, 1000, 10_000] {
        let design = sample_neighbors(&x, 1e-3, count, &measure, SamplingMode::Exact, 9)?;
        let fd = fd_gradient(&f, &xs, design.neighbors_of(0))?;
        let ideal = ideal_gradient(&exact, &xs, design.neighbors_of(0))?;
        println!(
            "{count:>6} neighbors: |fd - grad| = {:.4}, |ideal - grad| = {:.4}, |fd - ideal| = {:.2e}",
            (&fd - &exact).norm(),
            (&ideal - &exact).norm(),
            (&fd - &ideal).norm()
        );
    }
    println!("function evaluations: {}", f.eval_count());
    Ok(())
}
