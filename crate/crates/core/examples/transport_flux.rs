//! Simulate one source in the default maze and print the flux map.
//!
//! cargo run --release --example transport_flux [histories_per_batch]

use deeponet_maze::source::SourceSpec;
use deeponet_maze::transport::{build_maze, simulate_flux, MaterialTable, MazeConfig, RunPlan, TallyGrid};

fn main() -> deeponet_maze::Result<()> {
    let per_batch = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2_000);
    let geometry = build_maze(&MazeConfig::default())?;
    let grid = TallyGrid::with_cells(16, 16);
    let spec = SourceSpec::centered(0.8, 2.5)?;
    let plan = RunPlan {
        particles_per_batch: per_batch,
        batches: 10,
        seed: 1,
    };
    let start = std::time::Instant::now();
    let flux = simulate_flux(&geometry, &MaterialTable::default(), &spec, &grid, &plan, 0)?;
    println!(
        "{} histories in {:.3} s, {} truncated",
        plan.histories(),
        start.elapsed().as_secs_f64(),
        flux.truncated_histories
    );

    println!("log10 flux, top row = highest y");
    for iy in (0..grid.ny).rev() {
        let row: Vec<String> = (0..grid.nx)
            .map(|ix| format!("{:5.2}", flux.get(ix, iy).max(1e-8).log10()))
            .collect();
        println!("{}", row.join(" "));
    }
    let mut rel = flux.rel_error.clone();
    rel.sort_by(f64::total_cmp);
    println!("median relative error {:.4}", rel[rel.len() / 2]);
    Ok(())
}
