//! Train a DeepONet on a small corpus and score it on held-out functions.
//!
//! cargo run --release --example train_deeponet [iterations]

use deeponet_maze::bench::{build_dataset, evaluate_test_set, mean_std, train_set_model};
use deeponet_maze::config::ExperimentConfig;

fn main() -> deeponet_maze::Result<()> {
    let mut cfg = ExperimentConfig::desk();
    cfg.corpus.functions = 60;
    cfg.training.iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1_000);
    cfg.training.log_every = (cfg.training.iterations / 10).max(1);

    let ds = build_dataset(&cfg)?;
    let start = std::time::Instant::now();
    let trained = train_set_model(&cfg, &ds, 0)?;
    println!("trained {} iterations in {:.1} s", cfg.training.iterations, start.elapsed().as_secs_f64());
    for (it, loss) in &trained.log.entries {
        println!("  iteration {it:>6}  loss {loss:.5}");
    }

    let reports = evaluate_test_set(&trained.model, &ds)?;
    let r2: Vec<f64> = reports.iter().map(|r| r.1.r2).collect();
    let (m, s) = mean_std(&r2);
    println!("test R² over {} functions: {m:.4} ± {s:.4}", r2.len());
    Ok(())
}
