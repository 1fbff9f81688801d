//! Compare DeepONet with per-function FCN and CNN fits on the best and worst
//! test cases.
//!
//! cargo run --release --example baselines

use deeponet_maze::bench::{build_dataset, run_table2_experiment, train_set_model};
use deeponet_maze::config::ExperimentConfig;

fn main() -> deeponet_maze::Result<()> {
    let mut cfg = ExperimentConfig::desk();
    cfg.corpus.functions = 60;
    cfg.training.iterations = 1_000;
    cfg.baselines.iterations = 1_000;

    let ds = build_dataset(&cfg)?;
    let deeponet = train_set_model(&cfg, &ds, 0)?.model;
    let outcome = run_table2_experiment(&cfg, &ds, &deeponet)?;
    print!("{}", outcome.render());

    let dir = std::env::temp_dir().join("deeponet-maze-fields");
    outcome.write_fields(&dir)?;
    println!("field dumps in {}", dir.display());
    Ok(())
}
