//! Subcommand dispatch for the `deeponet-maze` binary.
//!
//! Every subcommand reads the TOML config given by `--config`, applies
//! `--seed` and `--out` (or `DEEPONET_MAZE_OUT`), and writes its outputs
//! atomically under the output directory:
//!
//! | subcommand | reads | writes |
//! |------------|-------|--------|
//! | generate | | `corpus.dset` |
//! | split | `corpus.dset` | `dataset.dset` |
//! | train | `dataset.dset` | `set<k>.ckpt`, `set<k>_loss.csv` |
//! | evaluate | `dataset.dset`, `set<k>.ckpt` | `set<k>_metrics.csv`, `table1.csv`, `table1.txt` |
//! | table1 | `dataset.dset` | checkpoints, `table1.csv`, `table1.txt` |
//! | table2 | `dataset.dset`, `set1.ckpt` | `table2.csv`, `table2.txt`, `fields/*.flux` |
//! | timing | `dataset.dset`, `set1.ckpt` | `timing.txt` |
//! | gradcheck | | `gradcheck.txt` |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{
    build_dataset, evaluate_test_set, generate_stage, gradient_audit, run_table1_experiment, run_table2_experiment,
    run_timing_report, split_stage, train_set_model, write_report, BenchmarkTable, TableRow, AUDIT_TOLERANCE,
};
use crate::config::ExperimentConfig;
use crate::dataset::{read_dataset, write_dataset, DatasetFile};
use crate::error::{Error, Result};
use crate::models::{load_checkpoint, save_checkpoint, AnyModel, Checkpoint, DeepONet, Trained};

pub const OUT_ENV: &str = "DEEPONET_MAZE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_MISSING_INPUT: i32 = 4;
pub const EXIT_STAGE: i32 = 5;
pub const EXIT_CHECK_FAILED: i32 = 6;

#[derive(Debug, Parser)]
#[command(name = "deeponet-maze", about = "DeepONet surrogate for Monte Carlo flux in a concrete maze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Sample sources and simulate the corpus.
    Generate,
    /// Split functions into train/test and fit normalization.
    Split,
    /// Train one DeepONet per configured Set.
    Train,
    /// Score saved checkpoints on the test functions.
    Evaluate,
    /// Train and score every Set.
    Table1,
    /// Best/worst case comparison against FCN and CNN.
    Table2,
    /// Simulation versus inference wall time.
    Timing,
    /// Finite-difference gradient audit.
    Gradcheck {
        #[arg(long, default_value_t = 200)]
        probes: usize,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Split => "split",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Table1 => "table1",
            Command::Table2 => "table2",
            Command::Timing => "timing",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }
}

enum Failure {
    Missing(String),
    Stage(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Stage(e)
    }
}

/// Parse `argv` (including the program name) and run. Returns the process
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stage = cli.command.stage();
    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("{stage}: --config <PATH> is required");
        return EXIT_USAGE;
    };
    if !config_path.is_file() {
        eprintln!("{stage}: config file {} does not exist", config_path.display());
        return EXIT_USAGE;
    }
    let mut cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{stage}: malformed config {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)) {
        cfg.out_dir = o;
    }
    match dispatch(cli.command, &cfg) {
        Ok(msg) => {
            print!("{msg}");
            EXIT_OK
        }
        Err(Failure::Missing(m)) => {
            eprintln!("{stage}: missing input: {m}");
            EXIT_MISSING_INPUT
        }
        Err(Failure::Stage(e)) => {
            eprintln!("{stage} failed: {e}");
            EXIT_STAGE
        }
        Err(Failure::Check(m)) => {
            eprint!("{stage}: {m}");
            EXIT_CHECK_FAILED
        }
    }
}

fn input(path: PathBuf) -> std::result::Result<PathBuf, Failure> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::Missing(path.display().to_string()))
    }
}

fn load_split(out: &Path) -> std::result::Result<DatasetFile, Failure> {
    let ds = read_dataset(&input(out.join("dataset.dset"))?)?;
    if ds.split.is_none() || ds.norm.is_none() {
        return Err(Failure::Missing("dataset.dset has no split; run `split` first".into()));
    }
    Ok(ds)
}

fn load_deeponet(path: PathBuf) -> std::result::Result<DeepONet, Failure> {
    match load_checkpoint(&input(path.clone())?)?.model {
        AnyModel::DeepONet(m) => Ok(m),
        _ => Err(Failure::Stage(Error::Protocol(format!("{} is not a DeepONet checkpoint", path.display())))),
    }
}

fn save_trained(cfg: &ExperimentConfig, set: usize, t: &Trained<DeepONet>) -> Result<()> {
    let out = &cfg.out_dir;
    save_checkpoint(
        &Checkpoint {
            model: AnyModel::DeepONet(t.model.clone()),
            optimizer: Some(t.optimizer.clone()),
            config_hash: cfg.hash(),
        },
        &out.join(format!("set{}.ckpt", set + 1)),
    )?;
    let mut log = format!("# config_hash={}\niteration,loss\n", cfg.hash());
    for (i, l) in &t.log.entries {
        let _ = writeln!(log, "{i},{l:e}");
    }
    write_report(&out.join(format!("set{}_loss.csv", set + 1)), &log)
}

fn dispatch(cmd: Command, cfg: &ExperimentConfig) -> std::result::Result<String, Failure> {
    let out = cfg.out_dir.as_path();
    match cmd {
        Command::Generate => {
            let corpus = generate_stage(cfg)?;
            let n = corpus.len();
            write_dataset(
                &DatasetFile {
                    corpus,
                    split: None,
                    norm: None,
                },
                &out.join("corpus.dset"),
            )?;
            Ok(format!("generated {n} functions into {}\n", out.join("corpus.dset").display()))
        }
        Command::Split => {
            let ds = read_dataset(&input(out.join("corpus.dset"))?)?;
            let ds = split_stage(cfg, ds.corpus)?;
            write_dataset(&ds, &out.join("dataset.dset"))?;
            let s = ds.split.as_ref().expect("split stage sets the split");
            Ok(format!("split {} train / {} test\n", s.train.len(), s.test.len()))
        }
        Command::Train => {
            let ds = load_split(out)?;
            let mut msg = String::new();
            for set in 0..cfg.subsets.len() {
                let t = train_set_model(cfg, &ds, set)?;
                save_trained(cfg, set, &t)?;
                let _ = writeln!(msg, "Set{} final loss {:.5}", set + 1, t.log.last_loss().unwrap_or(f64::NAN));
            }
            Ok(msg)
        }
        Command::Evaluate => {
            let ds = load_split(out)?;
            let mut rows = Vec::new();
            for (set, &fraction) in cfg.subsets.iter().enumerate() {
                let model = load_deeponet(out.join(format!("set{}.ckpt", set + 1)))?;
                let per = evaluate_test_set(&model, &ds)?;
                let mut csv = format!("# config_hash={}\nspec_id,r2,rmse,mae,ratio\n", cfg.hash());
                for (id, r) in &per {
                    let ratio = r.rmse_mae_ratio.map_or("undefined".into(), |v| format!("{v:e}"));
                    let _ = writeln!(csv, "{id},{:e},{:e},{:e},{ratio}", r.r2, r.rmse, r.mae);
                }
                write_report(&out.join(format!("set{}_metrics.csv", set + 1)), &csv)?;
                let only: Vec<_> = per.into_iter().map(|p| p.1).collect();
                rows.push(TableRow::aggregate(format!("Set{}", set + 1), fraction, &only));
            }
            let table = BenchmarkTable {
                rows,
                config_hash: cfg.hash(),
            };
            write_report(&out.join("table1.csv"), &table.to_csv())?;
            write_report(&out.join("table1.txt"), &table.render())?;
            Ok(table.render())
        }
        Command::Table1 => {
            let ds = match load_split(out) {
                Ok(ds) => ds,
                Err(Failure::Missing(_)) => {
                    let ds = build_dataset(cfg)?;
                    write_dataset(&ds, &out.join("dataset.dset"))?;
                    ds
                }
                Err(e) => return Err(e),
            };
            let o = run_table1_experiment(cfg, &ds)?;
            for (set, t) in o.models.iter().enumerate() {
                save_trained(cfg, set, t)?;
            }
            write_report(&out.join("table1.csv"), &o.table.to_csv())?;
            write_report(&out.join("table1.txt"), &o.table.render())?;
            Ok(o.table.render())
        }
        Command::Table2 => {
            let ds = load_split(out)?;
            let model = load_deeponet(out.join("set1.ckpt"))?;
            let o = run_table2_experiment(cfg, &ds, &model)?;
            o.write_fields(&out.join("fields"))?;
            write_report(&out.join("table2.csv"), &o.to_csv())?;
            write_report(&out.join("table2.txt"), &o.render())?;
            Ok(o.render())
        }
        Command::Timing => {
            let ds = load_split(out)?;
            let model = load_deeponet(out.join("set1.ckpt"))?;
            let r = run_timing_report(cfg, &ds, &model)?;
            write_report(&out.join("timing.txt"), &r.render())?;
            Ok(r.render())
        }
        Command::Gradcheck { probes } => {
            let audit = gradient_audit(cfg.sensors.count, probes, cfg.seed)?;
            let mut text = format!("# config_hash={}\n", cfg.hash());
            let mut ok = true;
            for (name, r) in &audit {
                let pass = r.passes(AUDIT_TOLERANCE);
                ok &= pass;
                let _ = writeln!(
                    text,
                    "{name:<9} probes {:>4}  max rel error {:.3e}  {}",
                    r.probes,
                    r.max_rel_error,
                    if pass { "pass" } else { "FAIL" }
                );
            }
            write_report(&out.join("gradcheck.txt"), &text)?;
            if ok {
                Ok(text)
            } else {
                Err(Failure::Check(text))
            }
        }
    }
}
