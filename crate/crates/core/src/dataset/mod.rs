//! From random sources to DeepONet training triples.
//!
//! 1. [`generate_corpus`] samples `n` sources, discretizes each on the sensor
//!    grid and simulates its flux field.
//! 2. [`split_functions`] partitions whole functions 8:2 into train/test.
//! 3. [`subsample_points`] keeps a fixed fraction of each function's tally
//!    cells (Set1..Set5 = 50%..90%), drawn independently per function.
//! 4. [`assemble_operator_samples`] yields `(sensor values, cell center,
//!    normalized flux)` triples; [`TrainingSet`] is the packed form the
//!    trainers consume.

pub mod format;

use ndarray::Array2;
use rand::seq::index;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, Domain};
use crate::source::{discretize_source, sample_source_spec, SensorGrid, SensorVector, SourceRanges, SourceSpec};
use crate::transport::{simulate_flux, FluxField, MaterialTable, MazeGeometry, RunPlan, TallyGrid};

pub use format::{read_dataset, write_dataset, DatasetFile};

/// Training fractions of the Set1..Set5 ladder.
pub const SUBSET_MENU: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Additive floor inside the log-flux transform.
pub const TARGET_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub spec_id: u32,
    pub spec: SourceSpec,
    pub sensors: SensorVector,
    pub flux: FluxField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    pub sensor_grid: SensorGrid,
    pub tally_grid: TallyGrid,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries must agree with the corpus grids.
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if e.sensors.values.len() != self.sensor_grid.count {
                return Err(Error::Shape(format!(
                    "entry {} has {} sensors, grid has {}",
                    e.spec_id,
                    e.sensors.values.len(),
                    self.sensor_grid.count
                )));
            }
            if !e.flux.grid.same_mesh(&self.tally_grid) || e.flux.values.len() != self.tally_grid.cells() {
                return Err(Error::Shape(format!("entry {} flux grid differs from corpus grid", e.spec_id)));
            }
        }
        Ok(())
    }
}

/// Everything needed to simulate one corpus.
#[derive(Debug, Clone, Copy)]
pub struct CorpusSetup<'a> {
    pub geometry: &'a MazeGeometry,
    pub materials: &'a MaterialTable,
    pub sensor_grid: &'a SensorGrid,
    pub tally_grid: &'a TallyGrid,
    pub ranges: &'a SourceRanges,
    /// Particles and batches per function; the seed is derived per entry.
    pub plan: RunPlan,
}

/// Sample, discretize and simulate `n` source functions. Entry `i` uses
/// streams derived from `(seed, i)` only, so the corpus is identical however
/// the work is scheduled.
pub fn generate_corpus(n: usize, seed: u64, setup: &CorpusSetup<'_>, config_hash: &str) -> Result<Corpus> {
    if n < 2 {
        return Err(Error::Config(format!("corpus needs at least 2 functions, got {n}")));
    }
    setup.sensor_grid.validate()?;
    setup.tally_grid.validate()?;
    setup.plan.validate()?;
    setup.ranges.validate()?;
    let entries = (0..n)
        .into_par_iter()
        .map(|i| {
            let wrap = |e: Error| Error::Simulation {
                entry: i,
                source: Box::new(e),
            };
            let spec_id = u32::try_from(i).map_err(|_| wrap(Error::Config("corpus too large".into())))?;
            let mut rng = stream(seed, Domain::SourceSampling, i as u64, 0);
            let spec = sample_source_spec(&mut rng, setup.ranges).map_err(wrap)?;
            let sensors = discretize_source(&spec, setup.sensor_grid, spec_id);
            let plan = RunPlan {
                seed: derive_seed(seed, &[Domain::Transport as u64, i as u64]),
                ..setup.plan
            };
            let flux = simulate_flux(setup.geometry, setup.materials, &spec, setup.tally_grid, &plan, spec_id)
                .map_err(wrap)?;
            Ok(CorpusEntry {
                spec_id,
                spec,
                sensors,
                flux,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus {
        entries,
        sensor_grid: *setup.sensor_grid,
        tally_grid: *setup.tally_grid,
        provenance: Provenance {
            seed,
            config_hash: config_hash.to_string(),
        },
    })
}

/// Function-level partition, as positions into `Corpus::entries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random permutation split 8:2, with the test share rounded down.
pub fn split_functions(corpus: &Corpus, seed: u64) -> Result<SplitCorpus> {
    let n = corpus.len();
    if n < 5 {
        return Err(Error::Config(format!("need at least 5 functions to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, Domain::Split, 0, 0));
    let n_test = n * 2 / 10;
    let test = order.split_off(n - n_test);
    Ok(SplitCorpus { train: order, test })
}

/// Selected tally cells per function of a corpus view.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSubset {
    pub fraction: f64,
    /// Parallel to the view passed to [`subsample_points`]; sorted cell indices.
    pub indices: Vec<Vec<usize>>,
}

pub fn subset_size(fraction: f64, cells: usize) -> usize {
    // guard against 0.7 * 6400 = 4479.999...
    (fraction * cells as f64 + 1e-9).floor() as usize
}

pub fn validate_fraction(fraction: f64) -> Result<()> {
    if SUBSET_MENU.iter().any(|f| (f - fraction).abs() < 1e-12) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "subset fraction {fraction} is not one of {SUBSET_MENU:?}"
        )))
    }
}

/// Independent uniform draw without replacement of `floor(fraction * cells)`
/// cells for every function in `view`. Each function's draw depends only on
/// `(seed, spec_id)`.
pub fn subsample_points(corpus: &Corpus, view: &[usize], fraction: f64, seed: u64) -> Result<PointSubset> {
    validate_fraction(fraction)?;
    let cells = corpus.tally_grid.cells();
    let k = subset_size(fraction, cells);
    let indices = view
        .iter()
        .map(|&pos| {
            let id = corpus.entries[pos].spec_id as u64;
            let mut rng = stream(seed, Domain::Subsample, id, (fraction * 100.0).round() as u64);
            let mut v = index::sample(&mut rng, cells, k).into_vec();
            v.sort_unstable();
            v
        })
        .collect();
    Ok(PointSubset { fraction, indices })
}

/// Normalization statistics fitted on training functions.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMeta {
    pub sensor_mean: Vec<f64>,
    pub sensor_std: Vec<f64>,
    pub target_floor: f64,
    /// Mean and std of `log10(flux + floor)` over all training cells.
    pub target_mean: f64,
    pub target_std: f64,
    pub coord_min: [f64; 2],
    pub coord_max: [f64; 2],
}

impl NormMeta {
    pub fn fit(corpus: &Corpus, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot fit normalization on zero functions".into()));
        }
        let m = corpus.sensor_grid.count;
        let nf = train.len() as f64;
        let mut sensor_mean = vec![0.0; m];
        for &i in train {
            for (acc, v) in sensor_mean.iter_mut().zip(&corpus.entries[i].sensors.values) {
                *acc += v;
            }
        }
        sensor_mean.iter_mut().for_each(|v| *v /= nf);
        let mut sensor_std = vec![0.0; m];
        for &i in train {
            for ((acc, v), mu) in sensor_std.iter_mut().zip(&corpus.entries[i].sensors.values).zip(&sensor_mean) {
                *acc += (v - mu) * (v - mu);
            }
        }
        sensor_std
            .iter_mut()
            .for_each(|v| *v = guard_std((*v / nf).sqrt()));

        let logs: Vec<f64> = train
            .iter()
            .flat_map(|&i| corpus.entries[i].flux.values.iter())
            .map(|&v| (v + TARGET_FLOOR).log10())
            .collect();
        let target_mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let target_std = guard_std(
            (logs.iter().map(|v| (v - target_mean).powi(2)).sum::<f64>() / logs.len() as f64).sqrt(),
        );

        let g = &corpus.tally_grid;
        let first = g.cell_center(0);
        let last = g.cell_center(g.cells() - 1);
        Ok(NormMeta {
            sensor_mean,
            sensor_std,
            target_floor: TARGET_FLOOR,
            target_mean,
            target_std,
            coord_min: first,
            coord_max: last,
        })
    }

    pub fn sensors(&self) -> usize {
        self.sensor_mean.len()
    }

    pub fn normalize_sensors(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.sensors() {
            return Err(Error::Shape(format!(
                "{} sensor values, normalization expects {}",
                raw.len(),
                self.sensors()
            )));
        }
        Ok(raw
            .iter()
            .zip(&self.sensor_mean)
            .zip(&self.sensor_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn normalize_coord(&self, p: [f64; 2]) -> [f64; 2] {
        let f = |v: f64, lo: f64, hi: f64| if hi > lo { 2.0 * (v - lo) / (hi - lo) - 1.0 } else { 0.0 };
        [
            f(p[0], self.coord_min[0], self.coord_max[0]),
            f(p[1], self.coord_min[1], self.coord_max[1]),
        ]
    }

    pub fn transform_target(&self, flux: f64) -> f64 {
        ((flux + self.target_floor).log10() - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, t: f64) -> f64 {
        10f64.powf(t * self.target_std + self.target_mean) - self.target_floor
    }

    /// Normalized coordinates of every cell center, one row per cell.
    pub fn grid_coords(&self, grid: &TallyGrid) -> Array2<f64> {
        Array2::from_shape_fn((grid.cells(), 2), |(k, j)| self.normalize_coord(grid.cell_center(k))[j])
    }
}

fn guard_std(s: f64) -> f64 {
    if s > 1e-12 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// One DeepONet training triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorSample<'a> {
    pub spec_id: u32,
    /// Raw sensor values of the source function.
    pub branch_input: &'a [f64],
    /// Cell center (cm).
    pub trunk_point: [f64; 2],
    /// Normalized flux at that cell.
    pub target: f64,
}

/// Triples for every (function, selected cell) in `view`, function-major.
/// With no subset, every cell is selected.
pub fn assemble_operator_samples<'a>(
    corpus: &'a Corpus,
    view: &'a [usize],
    subset: Option<&'a PointSubset>,
    norm: &'a NormMeta,
) -> Result<impl Iterator<Item = OperatorSample<'a>> + 'a> {
    corpus.validate()?;
    if let Some(s) = subset {
        if s.indices.len() != view.len() {
            return Err(Error::Shape(format!(
                "subset covers {} functions, view has {}",
                s.indices.len(),
                view.len()
            )));
        }
    }
    let cells = corpus.tally_grid.cells();
    let grid = corpus.tally_grid;
    Ok(view.iter().enumerate().flat_map(move |(vi, &pos)| {
        let entry = &corpus.entries[pos];
        let picks: Box<dyn Iterator<Item = usize> + 'a> = match subset {
            Some(s) => Box::new(s.indices[vi].iter().copied()),
            None => Box::new(0..cells),
        };
        picks.map(move |k| OperatorSample {
            spec_id: entry.spec_id,
            branch_input: &entry.sensors.values,
            trunk_point: grid.cell_center(k),
            target: norm.transform_target(entry.flux.values[k]),
        })
    }))
}

/// Packed, normalized training data for a set of functions.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub spec_ids: Vec<u32>,
    /// Normalized sensor rows, one per function.
    pub branch: Array2<f64>,
    /// Normalized cell-center coordinates, one row per cell.
    pub coords: Array2<f64>,
    /// Normalized targets, one row per function, one column per cell.
    pub targets: Array2<f64>,
    /// Usable cells per function.
    pub points: Vec<Vec<usize>>,
}

impl TrainingSet {
    pub fn build(corpus: &Corpus, view: &[usize], subset: Option<&PointSubset>, norm: &NormMeta) -> Result<Self> {
        corpus.validate()?;
        if norm.sensors() != corpus.sensor_grid.count {
            return Err(Error::Shape("normalization sensor count differs from corpus".into()));
        }
        let cells = corpus.tally_grid.cells();
        let m = corpus.sensor_grid.count;
        let mut branch = Array2::zeros((view.len(), m));
        let mut targets = Array2::zeros((view.len(), cells));
        for (r, &pos) in view.iter().enumerate() {
            let e = &corpus.entries[pos];
            for (j, v) in norm.normalize_sensors(&e.sensors.values)?.into_iter().enumerate() {
                branch[[r, j]] = v;
            }
            for k in 0..cells {
                targets[[r, k]] = norm.transform_target(e.flux.values[k]);
            }
        }
        let points = match subset {
            Some(s) => {
                if s.indices.len() != view.len() {
                    return Err(Error::Shape("subset does not match the view".into()));
                }
                s.indices.clone()
            }
            None => vec![(0..cells).collect(); view.len()],
        };
        Ok(TrainingSet {
            spec_ids: view.iter().map(|&p| corpus.entries[p].spec_id).collect(),
            branch,
            coords: norm.grid_coords(&corpus.tally_grid),
            targets,
            points,
        })
    }

    pub fn functions(&self) -> usize {
        self.spec_ids.len()
    }

    /// Restrict to a single function (by row).
    pub fn single(&self, row: usize) -> TrainingSet {
        TrainingSet {
            spec_ids: vec![self.spec_ids[row]],
            branch: self.branch.slice(ndarray::s![row..row + 1, ..]).to_owned(),
            coords: self.coords.clone(),
            targets: self.targets.slice(ndarray::s![row..row + 1, ..]).to_owned(),
            points: vec![self.points[row].clone()],
        }
    }
}
