//! Metrics, experiment orchestration and reports.

pub mod gradaudit;
pub mod metrics;

pub use gradaudit::{gradient_audit, AUDIT_STEP, AUDIT_TOLERANCE};
pub use metrics::{compute_metrics, mean_std, MetricsReport, Scope};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::dataset::{generate_corpus, split_functions, subsample_points, Corpus, DatasetFile, NormMeta, TrainingSet};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::models::{
    evaluate_on_function, inference_timing, train_cnn, train_deeponet, train_fcn, DeepONet, SurrogateModel,
    TrainConfig, Trained,
};
use crate::rng::{derive_seed, Domain};
use crate::transport::{timing_probe, FluxField};

/// Sample, simulate and discretize the corpus described by `cfg`.
pub fn generate_stage(cfg: &ExperimentConfig) -> Result<Corpus> {
    let geometry = cfg.geometry()?;
    generate_corpus(cfg.corpus.functions, cfg.seed, &cfg.corpus_setup(&geometry), &cfg.hash())
}

/// Function-level split plus normalization fitted on the training side.
pub fn split_stage(cfg: &ExperimentConfig, corpus: Corpus) -> Result<DatasetFile> {
    let split = split_functions(&corpus, derive_seed(cfg.seed, &[Domain::Split as u64]))?;
    let norm = NormMeta::fit(&corpus, &split.train)?;
    Ok(DatasetFile {
        corpus,
        split: Some(split),
        norm: Some(norm),
    })
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<DatasetFile> {
    split_stage(cfg, generate_stage(cfg)?)
}

fn parts(ds: &DatasetFile) -> Result<(&crate::dataset::SplitCorpus, &NormMeta)> {
    match (&ds.split, &ds.norm) {
        (Some(s), Some(n)) => Ok((s, n)),
        _ => Err(Error::Protocol("dataset has not been split yet".into())),
    }
}

fn subset_seed(cfg: &ExperimentConfig) -> u64 {
    derive_seed(cfg.seed, &[Domain::Subsample as u64])
}

/// Training configuration with its seed tied to the experiment seed and a
/// per-run label.
pub fn run_train_config(cfg: &ExperimentConfig, base: &TrainConfig, label: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, &[Domain::Init as u64, base.seed, label]),
        ..base.clone()
    }
}

/// Training set for the given Set fraction.
pub fn training_set(cfg: &ExperimentConfig, ds: &DatasetFile, fraction: f64) -> Result<TrainingSet> {
    let (split, norm) = parts(ds)?;
    let subset = subsample_points(&ds.corpus, &split.train, fraction, subset_seed(cfg))?;
    TrainingSet::build(&ds.corpus, &split.train, Some(&subset), norm)
}

/// Train the DeepONet for the Set with index `set` in `cfg.subsets`.
pub fn train_set_model(cfg: &ExperimentConfig, ds: &DatasetFile, set: usize) -> Result<Trained<DeepONet>> {
    let fraction = *cfg
        .subsets
        .get(set)
        .ok_or_else(|| Error::Config(format!("no Set {}", set + 1)))?;
    let (_, norm) = parts(ds)?;
    let ts = training_set(cfg, ds, fraction)?;
    train_deeponet(&ts, norm, &run_train_config(cfg, &cfg.training, set as u64)).map_err(|e| match e {
        Error::Training { step, reason } => Error::Training {
            step,
            reason: format!("Set{} ({}%): {reason}", set + 1, (fraction * 100.0).round()),
        },
        other => other,
    })
}

/// Per-function metrics over every test function, in test order.
pub fn evaluate_test_set(model: &dyn SurrogateModel, ds: &DatasetFile) -> Result<Vec<(u32, MetricsReport)>> {
    let (split, _) = parts(ds)?;
    split
        .test
        .par_iter()
        .map(|&pos| {
            let e = &ds.corpus.entries[pos];
            evaluate_on_function(model, e, &ds.corpus.tally_grid).map(|(r, _)| (e.spec_id, r))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub fraction: f64,
    pub functions: usize,
    /// `(mean, sample std)` over test functions.
    pub r2: (f64, f64),
    pub rmse: (f64, f64),
    pub mae: (f64, f64),
    /// Over functions where the ratio is defined.
    pub ratio: (f64, f64),
}

impl TableRow {
    pub fn aggregate(label: String, fraction: f64, reports: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        let ratios: Vec<f64> = reports.iter().filter_map(|r| r.rmse_mae_ratio).collect();
        TableRow {
            label,
            fraction,
            functions: reports.len(),
            r2: col(|r| r.r2),
            rmse: col(|r| r.rmse),
            mae: col(|r| r.mae),
            ratio: if ratios.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&ratios) },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<TableRow>,
    pub config_hash: String,
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# config_hash={}\n", self.config_hash);
        s.push_str("set,fraction,functions,r2_mean,r2_std,rmse_mean,rmse_std,mae_mean,mae_std,ratio_mean,ratio_std\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.label, r.fraction, r.functions, r.r2.0, r.r2.1, r.rmse.0, r.rmse.1, r.mae.0, r.mae.1, r.ratio.0, r.ratio.1
            );
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = String::from("DeepONet test metrics, mean ± std over test functions\n");
        let _ = writeln!(
            s,
            "{:<6} {:>5} {:>18} {:>22} {:>22} {:>16}",
            "Set", "frac", "R²", "RMSE", "MAE", "RMSE/MAE"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<6} {:>5.1} {:>8.4} ± {:<7.4} {:>10.4e} ± {:<9.2e} {:>10.4e} ± {:<9.2e} {:>6.3} ± {:<6.3}",
                r.label, r.fraction, r.r2.0, r.r2.1, r.rmse.0, r.rmse.1, r.mae.0, r.mae.1, r.ratio.0, r.ratio.1
            );
        }
        let _ = writeln!(s, "config {}", self.config_hash);
        s
    }
}

#[derive(Debug, Clone)]
pub struct Table1Outcome {
    pub table: BenchmarkTable,
    pub models: Vec<Trained<DeepONet>>,
    /// Per Set, per test function.
    pub reports: Vec<Vec<(u32, MetricsReport)>>,
}

/// One DeepONet per configured Set, each scored on every test function.
pub fn run_table1_experiment(cfg: &ExperimentConfig, ds: &DatasetFile) -> Result<Table1Outcome> {
    let mut rows = Vec::new();
    let mut models = Vec::new();
    let mut reports = Vec::new();
    for (i, &fraction) in cfg.subsets.iter().enumerate() {
        let trained = train_set_model(cfg, ds, i)?;
        let per = evaluate_test_set(&trained.model, ds)?;
        let only: Vec<MetricsReport> = per.iter().map(|p| p.1).collect();
        rows.push(TableRow::aggregate(format!("Set{}", i + 1), fraction, &only));
        models.push(trained);
        reports.push(per);
    }
    Ok(Table1Outcome {
        table: BenchmarkTable {
            rows,
            config_hash: cfg.hash(),
        },
        models,
        reports,
    })
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub label: &'static str,
    pub spec_id: u32,
    /// DeepONet, FCN, CNN.
    pub reports: Vec<(&'static str, MetricsReport)>,
    pub truth: FluxField,
    pub predictions: Vec<(&'static str, FluxField)>,
}

impl CaseResult {
    pub fn r2_of(&self, name: &str) -> Option<f64> {
        self.reports.iter().find(|r| r.0 == name).map(|r| r.1.r2)
    }
}

#[derive(Debug, Clone)]
pub struct Table2Outcome {
    pub best: CaseResult,
    pub worst: CaseResult,
    pub config_hash: String,
}

impl Table2Outcome {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# config_hash={}\ncase,spec_id,model,r2,rmse,mae,ratio\n", self.config_hash);
        for c in [&self.best, &self.worst] {
            for (name, r) in &c.reports {
                let _ = writeln!(
                    s,
                    "{},{},{},{:e},{:e},{:e},{}",
                    c.label,
                    c.spec_id,
                    name,
                    r.r2,
                    r.rmse,
                    r.mae,
                    r.rmse_mae_ratio.map_or("undefined".to_string(), |v| format!("{v:e}"))
                );
            }
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = String::from("Best and worst DeepONet test cases against per-case baselines\n");
        for c in [&self.best, &self.worst] {
            let _ = writeln!(s, "{} case, spec {}", c.label, c.spec_id);
            let _ = writeln!(s, "  {:<9} {:>8} {:>11} {:>11} {:>9}", "model", "R²", "RMSE", "MAE", "RMSE/MAE");
            for (name, r) in &c.reports {
                let _ = writeln!(
                    s,
                    "  {:<9} {:>8.4} {:>11.4e} {:>11.4e} {:>9}",
                    name,
                    r.r2,
                    r.rmse,
                    r.mae,
                    r.rmse_mae_ratio.map_or("-".to_string(), |v| format!("{v:.3}"))
                );
            }
        }
        let _ = writeln!(s, "config {}", self.config_hash);
        s
    }

    /// Ground truth and every model's prediction as FluxField text files.
    pub fn write_fields(&self, dir: &Path) -> Result<()> {
        for c in [&self.best, &self.worst] {
            c.truth.write(&dir.join(format!("{}_truth.flux", c.label)))?;
            for (name, f) in &c.predictions {
                f.write(&dir.join(format!("{}_{}.flux", c.label, name.to_lowercase())))?;
            }
        }
        Ok(())
    }
}

/// Rank test functions by the Set1 DeepONet's R², then fit an FCN and a CNN
/// to the best and the worst case using that function's Set1 points, and
/// score all three on the full grid.
pub fn run_table2_experiment(cfg: &ExperimentConfig, ds: &DatasetFile, deeponet: &DeepONet) -> Result<Table2Outcome> {
    let (split, norm) = parts(ds)?;
    let ranked = evaluate_test_set(deeponet, ds)?;
    let pick = |better: bool| {
        ranked
            .iter()
            .zip(&split.test)
            .reduce(|a, b| {
                let take_b = if better { b.0 .1.r2 > a.0 .1.r2 } else { b.0 .1.r2 < a.0 .1.r2 };
                if take_b {
                    b
                } else {
                    a
                }
            })
            .map(|(_, &pos)| pos)
            .ok_or_else(|| Error::Protocol("no test functions to rank".into()))
    };
    let fraction = cfg.subsets[0];
    let case = |label: &'static str, pos: usize| -> Result<CaseResult> {
        let entry = &ds.corpus.entries[pos];
        let subset = subsample_points(&ds.corpus, &[pos], fraction, subset_seed(cfg))?;
        let set = TrainingSet::build(&ds.corpus, &[pos], Some(&subset), norm)?;
        let label_id = entry.spec_id as u64;
        let fcn = train_fcn(&set, norm, &run_train_config(cfg, &cfg.baselines, 100 + label_id))?.model;
        let cnn = train_cnn(&set, norm, &run_train_config(cfg, &cfg.baselines, 200 + label_id))?.model;
        let models: [&dyn SurrogateModel; 3] = [deeponet, &fcn, &cnn];
        let mut reports = Vec::new();
        let mut predictions = Vec::new();
        for m in models {
            let (r, f) = evaluate_on_function(m, entry, &ds.corpus.tally_grid)?;
            reports.push((m.name(), r));
            predictions.push((m.name(), f));
        }
        Ok(CaseResult {
            label,
            spec_id: entry.spec_id,
            reports,
            truth: entry.flux.clone(),
            predictions,
        })
    };
    Ok(Table2Outcome {
        best: case("best", pick(true)?)?,
        worst: case("worst", pick(false)?)?,
        config_hash: cfg.hash(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub simulation_seconds: f64,
    /// Per field, all timed functions predicted in one call. The ratio uses this.
    pub inference_seconds: f64,
    /// Per field, one call per function.
    pub single_field_seconds: f64,
    pub inference_functions: usize,
    pub ratio: f64,
    pub threshold: f64,
    pub histories: u64,
    pub machine: String,
    pub config_hash: String,
    pub seed: u64,
}

impl TimingReport {
    pub fn passes(&self) -> bool {
        self.ratio >= self.threshold
    }

    pub fn render(&self) -> String {
        format!(
            "simulation  {:.6} s per field ({} histories)\n\
             inference   {:.6} s per field (batch of {})\n\
             single      {:.6} s per field (one call each, {:.1}x)\n\
             ratio       {:.1}x ({} at >= {}x)\n\
             machine     {}\n\
             config      {}\n\
             seed        {}\n",
            self.simulation_seconds,
            self.histories,
            self.inference_seconds,
            self.inference_functions,
            self.single_field_seconds,
            self.simulation_seconds / self.single_field_seconds,
            self.ratio,
            if self.passes() { "pass" } else { "FAIL" },
            self.threshold,
            self.machine,
            self.config_hash,
            self.seed
        )
    }
}

pub fn machine_descriptor() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{}, {} hardware threads, {} rayon workers",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads,
        rayon::current_num_threads()
    )
}

pub const SPEED_RATIO_BAR: f64 = 100.0;

/// Mean wall time of a full simulation of test functions against mean wall
/// time of a full-field prediction by `model`.
pub fn run_timing_report(cfg: &ExperimentConfig, ds: &DatasetFile, model: &dyn SurrogateModel) -> Result<TimingReport> {
    let (split, _) = parts(ds)?;
    let geometry = cfg.geometry()?;
    let grid = &ds.corpus.tally_grid;
    let test: Vec<_> = split.test.iter().map(|&p| ds.corpus.entries[p].clone()).collect();
    let mut sim = 0.0;
    for k in 0..cfg.timing.simulations {
        let e = &test[k % test.len()];
        let plan = cfg.plan(derive_seed(cfg.seed, &[Domain::Probe as u64, k as u64]));
        sim += timing_probe(&plan, &geometry, &cfg.materials, &e.spec, grid)?;
    }
    let simulation_seconds = sim / cfg.timing.simulations as f64;
    let inference = inference_timing(model, &test, cfg.timing.inference_functions, grid)?;
    Ok(TimingReport {
        simulation_seconds,
        inference_seconds: inference.batched,
        single_field_seconds: inference.single,
        inference_functions: cfg.timing.inference_functions,
        ratio: simulation_seconds / inference.batched,
        threshold: SPEED_RATIO_BAR,
        histories: cfg.plan(0).histories(),
        machine: machine_descriptor(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    })
}

/// Write `text` atomically, creating parent directories.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(r2: f64, rmse: f64) -> MetricsReport {
        MetricsReport {
            r2,
            rmse,
            mae: rmse / 1.25,
            rmse_mae_ratio: Some(1.25),
            n_points: 10,
            scope: Scope::PerFunction,
        }
    }

    #[test]
    fn aggregation_is_order_invariant() {
        let a = [report(0.9, 1.0), report(0.95, 2.0), report(0.99, 0.5)];
        let mut b = a;
        b.reverse();
        let ra = TableRow::aggregate("Set1".into(), 0.5, &a);
        let rb = TableRow::aggregate("Set1".into(), 0.5, &b);
        assert!((ra.r2.0 - rb.r2.0).abs() < 1e-15 && (ra.rmse.1 - rb.rmse.1).abs() < 1e-15);
        assert!((ra.r2.0 - 0.9466666666666667).abs() < 1e-12);
    }

    #[test]
    fn csv_carries_hash_and_one_row_per_set() {
        let rows = (0..5)
            .map(|i| TableRow::aggregate(format!("Set{}", i + 1), 0.5 + 0.1 * i as f64, &[report(0.9, 1.0), report(0.8, 2.0)]))
            .collect();
        let t = BenchmarkTable {
            rows,
            config_hash: "deadbeef".into(),
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("# config_hash=deadbeef\n"));
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.lines().skip(2).all(|l| l.split(',').count() == 11));
        assert!(t.render().contains("Set5"));
    }
}
