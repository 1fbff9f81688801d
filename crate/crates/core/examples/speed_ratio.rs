//! Time one desk-scale simulation against one full-field DeepONet prediction.
//!
//! cargo run --release --example speed_ratio

use deeponet_maze::bench::{build_dataset, run_timing_report, train_set_model};
use deeponet_maze::config::ExperimentConfig;

fn main() -> deeponet_maze::Result<()> {
    let mut cfg = ExperimentConfig::desk();
    cfg.corpus.functions = 20;
    cfg.training.iterations = 200;

    let ds = build_dataset(&cfg)?;
    // Inference cost does not depend on how well the model is trained.
    let model = train_set_model(&cfg, &ds, 0)?.model;
    print!("{}", run_timing_report(&cfg, &ds, &model)?.render());
    Ok(())
}
