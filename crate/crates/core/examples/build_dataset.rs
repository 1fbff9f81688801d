//! Generate a small corpus, split it, draw Set subsets, and round-trip the
//! dataset file.
//!
//! cargo run --release --example build_dataset [out_dir]

use std::path::PathBuf;

use deeponet_maze::bench::build_dataset;
use deeponet_maze::config::ExperimentConfig;
use deeponet_maze::dataset::{assemble_operator_samples, read_dataset, subsample_points, write_dataset};

fn main() -> deeponet_maze::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("deeponet-maze-example"));
    let mut cfg = ExperimentConfig::desk();
    cfg.corpus.functions = 20;
    cfg.transport.particles_per_batch = 500;

    let ds = build_dataset(&cfg)?;
    let split = ds.split.as_ref().expect("split");
    let norm = ds.norm.as_ref().expect("norm");
    println!(
        "{} functions: {} train, {} test; target log10 mean {:.3}, std {:.3}",
        ds.corpus.len(),
        split.train.len(),
        split.test.len(),
        norm.target_mean,
        norm.target_std
    );

    for &fraction in &cfg.subsets {
        let sub = subsample_points(&ds.corpus, &split.train, fraction, cfg.seed)?;
        let triples = assemble_operator_samples(&ds.corpus, &split.train, Some(&sub), norm)?.count();
        println!("Set at {:.0}%: {} cells per function, {triples} triples", fraction * 100.0, sub.indices[0].len());
    }

    let path = out.join("dataset.dset");
    write_dataset(&ds, &path)?;
    let back = read_dataset(&path)?;
    println!("wrote {} ({} bytes), round trip equal: {}", path.display(), std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0), back == ds);
    Ok(())
}
