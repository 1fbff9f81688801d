//! Train one DeepONet per Set fraction and print the Table 1 style summary.
//!
//! cargo run --release --example table1_sets [config.toml]

use deeponet_maze::bench::{build_dataset, run_table1_experiment};
use deeponet_maze::config::ExperimentConfig;

fn main() -> deeponet_maze::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => {
            let mut c = ExperimentConfig::desk();
            c.corpus.functions = 60;
            c.training.iterations = 800;
            c.subsets = vec![0.5, 0.7, 0.9];
            c
        }
    };
    let ds = build_dataset(&cfg)?;
    let outcome = run_table1_experiment(&cfg, &ds)?;
    print!("{}", outcome.table.render());
    println!();
    print!("{}", outcome.table.to_csv());
    Ok(())
}
