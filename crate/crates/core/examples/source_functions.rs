//! Sample a few Gaussian source functions and show their sensor vectors.
//!
//! cargo run --example source_functions

use deeponet_maze::rng::{stream, Domain};
use deeponet_maze::source::{discretize_source, sample_source_spec, source_intensity, SensorGrid, SourceRanges};

fn main() -> deeponet_maze::Result<()> {
    let grid = SensorGrid::default();
    let ranges = SourceRanges::default();
    println!("{} sensors on y in [{}, {}], spacing {:.5} cm", grid.count, grid.lo, grid.hi, grid.spacing());

    for i in 0..4 {
        let spec = sample_source_spec(&mut stream(7, Domain::SourceSampling, i, 0), &ranges)?;
        let v = discretize_source(&spec, &grid, i as u32);
        let (peak, at) = v
            .values
            .iter()
            .enumerate()
            .fold((0.0, 0), |acc, (k, &x)| if x > acc.0 { (x, k) } else { acc });
        println!(
            "source {i}: E = {:.3} MeV, mu_y = {:+.2} cm, peak {:.4} at y = {:+.2}, u(mu) = {:.4}",
            spec.energy_mev,
            spec.mu[1],
            peak,
            grid.positions()[at],
            source_intensity(spec.mu, &spec)
        );
    }
    Ok(())
}
