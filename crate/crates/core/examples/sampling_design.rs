//! Draw centers and neighbors on the unit cube and inspect the design.

use amoment::measure::{ball_mass, epsilon_max, rho, sample_interior_centers, sample_neighbors};
use amoment::{Domain, Measure, SamplingMode};

fn main() -> amoment::Result<()> {
    let n = 3;
    let measure = Measure::uniform(Domain::hypercube(n)?);
    let epsilon = 0.05;
    let centers = sample_interior_centers(&measure, 6, epsilon, 1)?;
    println!("largest admissible radius: {:.4}", epsilon_max(&centers, measure.domain())?);

    let design = sample_neighbors(&centers, epsilon, 120, &measure, SamplingMode::Exact, 2)?;
    println!("neighbor counts: {:?}", design.counts());
    println!("ball mass of center 0: {:.3e}", ball_mass(&measure, design.centers().column(0).as_slice(), epsilon)?.mass);
    println!("uniformity index: {}", rho(&design, &measure)?);

    let json = design.to_json()?;
    println!("design JSON: {} bytes", json.len());
    Ok(())
}
