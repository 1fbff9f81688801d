//! DeepONet and the FCN/CNN baselines: training, evaluation, checkpoints.

pub mod baselines;
pub mod checkpoint;
pub mod deeponet;

pub use baselines::{cnn_lengths, CnnBaseline, FcnBaseline};
pub use checkpoint::{load_checkpoint, save_checkpoint, AnyModel, Checkpoint};
pub use deeponet::{deeponet_predict, DeepONet, LATENT_WIDTH};

use std::time::Instant;

use ndarray::Array2;
use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::{compute_metrics, MetricsReport, Scope};
use crate::dataset::{CorpusEntry, NormMeta, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::{mean_l2_relative_error_grad, mse_grad, AdamState, GradientBundle, ParamSet};
use crate::rng::{stream, Domain};
use crate::transport::{FluxField, TallyGrid};

/// Anything that maps a sensor vector and normalized coordinates to
/// normalized targets.
pub trait SurrogateModel: Sync {
    fn name(&self) -> &'static str;
    fn norm(&self) -> &NormMeta;
    fn predict_normalized(&self, sensors_raw: &[f64], coords: &Array2<f64>) -> Result<Vec<f64>>;

    /// Raw-flux prediction over every cell of `grid`.
    fn predict_field(&self, sensors_raw: &[f64], grid: &TallyGrid) -> Result<Vec<f64>> {
        let coords = self.norm().grid_coords(grid);
        let norm = self.norm();
        Ok(self
            .predict_normalized(sensors_raw, &coords)?
            .into_iter()
            .map(|t| norm.inverse_target(t))
            .collect())
    }

    /// Raw-flux fields for several sensor vectors at once.
    fn predict_fields(&self, sensors_raw: &[&[f64]], grid: &TallyGrid) -> Result<Vec<Vec<f64>>> {
        sensors_raw.iter().map(|s| self.predict_field(s, grid)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Zero returns the initialized model untouched.
    pub iterations: usize,
    pub lr: f64,
    pub batch_functions: usize,
    pub points_per_function: usize,
    pub seed: u64,
    /// Loss is recorded every `log_every` iterations and at the last one.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 10_000,
            lr: 1e-3,
            batch_functions: 16,
            points_per_function: 256,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_functions == 0 || self.points_per_function == 0 || self.log_every == 0 {
            return Err(Error::Config(
                "batch_functions, points_per_function and log_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// `(iteration, batch loss)`, iterations counted from 1.
    pub entries: Vec<(usize, f64)>,
}

impl TrainLog {
    pub fn last_loss(&self) -> Option<f64> {
        self.entries.last().map(|e| e.1)
    }

    /// Mean of the recorded losses whose iteration falls in `lo..=hi`.
    pub fn mean_between(&self, lo: usize, hi: usize) -> Option<f64> {
        let v: Vec<f64> = self
            .entries
            .iter()
            .filter(|(i, _)| (lo..=hi).contains(i))
            .map(|e| e.1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub optimizer: AdamState,
    pub log: TrainLog,
}

/// One mini-batch: function rows of the training set, and for each the
/// cells to use.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: Vec<usize>,
    pub cells: Vec<Vec<usize>>,
}

/// Branch rows, coordinate rows, `(branch, coordinate)` pairs, targets.
type SharedBatch = (Array2<f64>, Array2<f64>, Vec<(usize, usize)>, Vec<f64>);

impl Batch {
    fn total_points(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    /// Like [`Batch::gather`] but each distinct cell appears once in the
    /// coordinate matrix; pairs index `(function row, coordinate row)`.
    fn gather_shared(&self, set: &TrainingSet) -> SharedBatch {
        let m = set.branch.ncols();
        let mut branch = Array2::zeros((self.rows.len(), m));
        let mut slot = vec![usize::MAX; set.coords.nrows()];
        let mut cells = Vec::new();
        let mut pairs = Vec::with_capacity(self.total_points());
        let mut targets = Vec::with_capacity(self.total_points());
        for (g, (&r, cs)) in self.rows.iter().zip(&self.cells).enumerate() {
            branch.row_mut(g).assign(&set.branch.row(r));
            for &c in cs {
                if slot[c] == usize::MAX {
                    slot[c] = cells.len();
                    cells.push(c);
                }
                pairs.push((g, slot[c]));
                targets.push(set.targets[[r, c]]);
            }
        }
        let coords = set.coords.select(ndarray::Axis(0), &cells);
        (branch, coords, pairs, targets)
    }

    fn gather(&self, set: &TrainingSet) -> (Array2<f64>, Array2<f64>, Vec<usize>, Vec<f64>) {
        let m = set.branch.ncols();
        let n = self.total_points();
        let mut branch = Array2::zeros((self.rows.len(), m));
        let mut coords = Array2::zeros((n, 2));
        let mut groups = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut i = 0;
        for (g, (&r, cells)) in self.rows.iter().zip(&self.cells).enumerate() {
            branch.row_mut(g).assign(&set.branch.row(r));
            for &c in cells {
                coords.row_mut(i).assign(&set.coords.row(c));
                groups.push(g);
                targets.push(set.targets[[r, c]]);
                i += 1;
            }
        }
        (branch, coords, groups, targets)
    }
}

/// Epoch-shuffled function order; points drawn without replacement within
/// each function's usable cells.
#[derive(Debug)]
pub struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch_functions: usize,
    points_per_function: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(functions: usize, cfg: &TrainConfig) -> Self {
        BatchSampler {
            order: (0..functions).collect(),
            cursor: functions,
            batch_functions: cfg.batch_functions.min(functions),
            points_per_function: cfg.points_per_function,
            rng: stream(cfg.seed, Domain::Batching, 0, 0),
        }
    }

    pub fn next_batch(&mut self, set: &TrainingSet) -> Batch {
        let mut rows = Vec::with_capacity(self.batch_functions);
        while rows.len() < self.batch_functions {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            rows.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        let cells = rows
            .iter()
            .map(|&r| {
                let avail = &set.points[r];
                if avail.len() <= self.points_per_function {
                    avail.clone()
                } else {
                    index::sample(&mut self.rng, avail.len(), self.points_per_function)
                        .into_iter()
                        .map(|k| avail[k])
                        .collect()
                }
            })
            .collect();
        Batch { rows, cells }
    }
}

fn check_set(set: &TrainingSet, norm: &NormMeta) -> Result<()> {
    if set.functions() == 0 {
        return Err(Error::Protocol("training set has no functions".into()));
    }
    if set.branch.ncols() != norm.sensors() {
        return Err(Error::Shape("training set sensor count differs from normalization".into()));
    }
    if set.points.iter().any(Vec::is_empty) {
        return Err(Error::Protocol("a training function has no usable points".into()));
    }
    Ok(())
}

/// Shared Adam loop. `step` returns the batch loss and its gradient.
fn fit<M, F>(mut model: M, set: &TrainingSet, cfg: &TrainConfig, mut step: F) -> Result<Trained<M>>
where
    M: ParamSet,
    F: FnMut(&M, &Batch) -> Result<(f64, GradientBundle)>,
{
    cfg.validate()?;
    let mut optimizer = AdamState::new(&model, cfg.lr);
    let mut sampler = BatchSampler::new(set.functions(), cfg);
    let mut log = TrainLog::default();
    for it in 1..=cfg.iterations {
        let batch = sampler.next_batch(set);
        let (loss, grads) = step(&model, &batch)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: it,
                reason: format!("loss became {loss}"),
            });
        }
        optimizer.step(&mut model, &grads).map_err(|e| match e {
            Error::Training { reason, .. } => Error::Training { step: it, reason },
            other => other,
        })?;
        if it % cfg.log_every == 0 || it == cfg.iterations {
            log.entries.push((it, loss));
        }
    }
    Ok(Trained { model, optimizer, log })
}

/// Batch loss and gradient of the mean L² relative error.
pub fn deeponet_batch_loss(model: &DeepONet, set: &TrainingSet, batch: &Batch) -> Result<(f64, GradientBundle)> {
    let (branch, coords, pairs, targets) = batch.gather_shared(set);
    let (pred, cache) = model.forward_pairs(&branch, &coords, &pairs)?;
    let bounds = group_bounds(&batch.cells);
    let p: Vec<&[f64]> = bounds.iter().map(|&(a, b)| &pred[a..b]).collect();
    let t: Vec<&[f64]> = bounds.iter().map(|&(a, b)| &targets[a..b]).collect();
    let (loss, grads) = mean_l2_relative_error_grad(&p, &t)?;
    let flat: Vec<f64> = grads.into_iter().flatten().collect();
    Ok((loss, model.backward_batch(&cache, &flat)?))
}

fn group_bounds(cells: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut start = 0;
    cells
        .iter()
        .map(|c| {
            let r = (start, start + c.len());
            start += c.len();
            r
        })
        .collect()
}

pub fn train_deeponet(set: &TrainingSet, norm: &NormMeta, cfg: &TrainConfig) -> Result<Trained<DeepONet>> {
    check_set(set, norm)?;
    let model = DeepONet::init(norm.clone(), &mut stream(cfg.seed, Domain::Init, 0, 0))?;
    fit(model, set, cfg, |m, b| deeponet_batch_loss(m, set, b))
}

pub fn fcn_batch_loss(model: &FcnBaseline, set: &TrainingSet, batch: &Batch) -> Result<(f64, GradientBundle)> {
    let (_, coords, _, targets) = batch.gather(set);
    let (out, cache) = model.net.forward(&coords)?;
    let pred: Vec<f64> = out.iter().copied().collect();
    let (loss, g) = mse_grad(&pred, &targets)?;
    let dout = Array2::from_shape_vec((g.len(), 1), g).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((loss, model.net.backward(&cache, &dout)?.0))
}

/// Fits a coordinate-only network to exactly one function.
pub fn train_fcn(set: &TrainingSet, norm: &NormMeta, cfg: &TrainConfig) -> Result<Trained<FcnBaseline>> {
    check_set(set, norm)?;
    if set.functions() != 1 {
        return Err(Error::Protocol(format!(
            "FCN is fitted per source function, got {} functions",
            set.functions()
        )));
    }
    let model = FcnBaseline::init(norm.clone(), set.spec_ids[0], &mut stream(cfg.seed, Domain::Init, 1, 0))?;
    fit(model, set, cfg, |m, b| fcn_batch_loss(m, set, b))
}

pub fn cnn_batch_loss(model: &CnnBaseline, set: &TrainingSet, batch: &Batch) -> Result<(f64, GradientBundle)> {
    let (branch, coords, groups, targets) = batch.gather(set);
    let (pred, cache) = model.forward_batch(&branch, &coords, &groups)?;
    let (loss, g) = mse_grad(&pred, &targets)?;
    Ok((loss, model.backward_batch(&cache, &g)?))
}

pub fn train_cnn(set: &TrainingSet, norm: &NormMeta, cfg: &TrainConfig) -> Result<Trained<CnnBaseline>> {
    check_set(set, norm)?;
    let model = CnnBaseline::init(norm.clone(), &mut stream(cfg.seed, Domain::Init, 2, 0))?;
    fit(model, set, cfg, |m, b| cnn_batch_loss(m, set, b))
}

/// Predict every cell of `grid`, map back to raw flux, and score against the
/// simulated truth.
pub fn evaluate_on_function(
    model: &dyn SurrogateModel,
    entry: &CorpusEntry,
    grid: &TallyGrid,
) -> Result<(MetricsReport, FluxField)> {
    if !grid.same_mesh(&entry.flux.grid) {
        return Err(Error::Shape(format!(
            "evaluation grid {}x{} differs from the tallied grid {}x{}",
            grid.nx, grid.ny, entry.flux.grid.nx, entry.flux.grid.ny
        )));
    }
    if model.norm().sensors() != entry.sensors.values.len() {
        return Err(Error::Shape("model sensor count differs from the entry".into()));
    }
    let values = model.predict_field(&entry.sensors.values, grid)?;
    let mut report = compute_metrics(&values, &entry.flux.values)?;
    report.scope = Scope::PerFunction;
    let field = FluxField {
        grid: *grid,
        rel_error: vec![0.0; values.len()],
        values,
        spec_id: entry.spec_id,
        seed: 0,
        truncated_histories: 0,
    };
    Ok((report, field))
}

/// Wall-clock seconds per full-field raw-flux prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceTiming {
    /// One `predict_field` call per function.
    pub single: f64,
    /// One `predict_fields` call covering every function, divided by their count.
    pub batched: f64,
}

/// Times `n_functions` predictions, cycling through `entries`, both one
/// field at a time and as a single batch.
pub fn inference_timing(
    model: &dyn SurrogateModel,
    entries: &[CorpusEntry],
    n_functions: usize,
    grid: &TallyGrid,
) -> Result<InferenceTiming> {
    if entries.is_empty() || n_functions == 0 {
        return Err(Error::Protocol("inference timing needs at least one function".into()));
    }
    let sensors: Vec<&[f64]> = (0..n_functions)
        .map(|k| entries[k % entries.len()].sensors.values.as_slice())
        .collect();
    // One untimed call so allocation warm-up is not billed to the first field.
    std::hint::black_box(model.predict_field(sensors[0], grid)?);
    let start = Instant::now();
    for s in &sensors {
        std::hint::black_box(model.predict_field(s, grid)?);
    }
    let single = start.elapsed().as_secs_f64() / n_functions as f64;
    let start = Instant::now();
    std::hint::black_box(model.predict_fields(&sensors, grid)?);
    let batched = start.elapsed().as_secs_f64() / n_functions as f64;
    Ok(InferenceTiming { single, batched })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::tiny_corpus;
    use crate::dataset::{split_functions, subsample_points};

    fn small_cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            iterations,
            batch_functions: 4,
            points_per_function: 32,
            seed: 5,
            log_every: 10,
            ..TrainConfig::default()
        }
    }

    fn setup() -> (crate::dataset::Corpus, NormMeta, TrainingSet) {
        let corpus = tiny_corpus(6, 8);
        let split = split_functions(&corpus, 1).unwrap();
        let norm = NormMeta::fit(&corpus, &split.train).unwrap();
        let set = TrainingSet::build(&corpus, &split.train, None, &norm).unwrap();
        (corpus, norm, set)
    }

    #[test]
    fn sampler_visits_every_function_each_epoch() {
        let (_, _, set) = setup();
        let cfg = TrainConfig {
            batch_functions: 1,
            ..small_cfg(1)
        };
        let mut s = BatchSampler::new(set.functions(), &cfg);
        let mut seen: Vec<usize> = (0..set.functions()).map(|_| s.next_batch(&set).rows[0]).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..set.functions()).collect::<Vec<_>>());
    }

    #[test]
    fn sampler_respects_subsets() {
        let (corpus, norm, _) = setup();
        let split = split_functions(&corpus, 1).unwrap();
        let sub = subsample_points(&corpus, &split.train, 0.5, 3).unwrap();
        let set = TrainingSet::build(&corpus, &split.train, Some(&sub), &norm).unwrap();
        let mut s = BatchSampler::new(set.functions(), &small_cfg(1));
        for _ in 0..10 {
            let b = s.next_batch(&set);
            for (r, cells) in b.rows.iter().zip(&b.cells) {
                assert!(cells.iter().all(|c| set.points[*r].contains(c)));
            }
        }
    }

    #[test]
    fn zero_iterations_returns_initial_model() {
        let (_, norm, set) = setup();
        let cfg = small_cfg(0);
        let t = train_deeponet(&set, &norm, &cfg).unwrap();
        let init = DeepONet::init(norm.clone(), &mut stream(cfg.seed, Domain::Init, 0, 0)).unwrap();
        assert_eq!(t.model, init);
        assert!(t.log.entries.is_empty());
        let c = train_cnn(&set, &norm, &cfg).unwrap();
        assert_eq!(c.optimizer.step_count, 0);
    }

    #[test]
    fn training_is_deterministic() {
        let (_, norm, set) = setup();
        let a = train_deeponet(&set, &norm, &small_cfg(20)).unwrap();
        let b = train_deeponet(&set, &norm, &small_cfg(20)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn deeponet_overfits_one_function() {
        // Smooth log-linear toy field: the raw tallies of `tiny_corpus` are
        // too noisy for a meaningful capacity bound.
        let mut corpus = tiny_corpus(6, 8);
        let grid = corpus.tally_grid;
        for e in &mut corpus.entries {
            for (k, v) in e.flux.values.iter_mut().enumerate() {
                let [x, y] = grid.cell_center(k);
                *v = 10f64.powf(1.0 + 0.02 * x - 0.01 * y);
            }
        }
        let split = split_functions(&corpus, 1).unwrap();
        let norm = NormMeta::fit(&corpus, &split.train).unwrap();
        let set = TrainingSet::build(&corpus, &split.train, None, &norm).unwrap();
        let one = set.single(0);
        let cfg = TrainConfig {
            iterations: 1500,
            points_per_function: 64,
            ..small_cfg(0)
        };
        let t = train_deeponet(&one, &norm, &cfg).unwrap();
        assert!(t.log.last_loss().unwrap() < 0.05, "{:?}", t.log.last_loss());
    }

    #[test]
    fn fcn_rejects_many_functions() {
        let (_, norm, set) = setup();
        assert!(matches!(train_fcn(&set, &norm, &small_cfg(1)), Err(Error::Protocol(_))));
        assert!(train_fcn(&set.single(1), &norm, &small_cfg(3)).is_ok());
    }

    #[test]
    fn self_evaluation_against_exact_model_output() {
        let (corpus, norm, _) = setup();
        let model = DeepONet::init(norm, &mut stream(9, Domain::Init, 0, 0)).unwrap();
        let entry = &corpus.entries[0];
        let (_, field) = evaluate_on_function(&model, entry, &corpus.tally_grid).unwrap();
        let mut fake = entry.clone();
        fake.flux.values = field.values.clone();
        let (r, _) = evaluate_on_function(&model, &fake, &corpus.tally_grid).unwrap();
        assert_eq!((r.r2, r.rmse, r.mae), (1.0, 0.0, 0.0));
        assert_eq!(field.values.len(), corpus.tally_grid.cells());
    }

    #[test]
    fn evaluation_rejects_other_grid() {
        let (corpus, norm, _) = setup();
        let model = DeepONet::init(norm, &mut stream(9, Domain::Init, 0, 0)).unwrap();
        let other = TallyGrid::with_cells(4, 4);
        assert!(evaluate_on_function(&model, &corpus.entries[0], &other).is_err());
    }

    #[test]
    fn divergence_reports_iteration() {
        let (_, norm, set) = setup();
        let cfg = TrainConfig {
            lr: 1e300,
            ..small_cfg(50)
        };
        match train_fcn(&set.single(0), &norm, &cfg) {
            Err(Error::Training { step, .. }) => assert!((1..=50).contains(&step)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
