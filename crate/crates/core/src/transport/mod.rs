//! One-group 2D Monte Carlo transport with a track-length flux tally.
//!
//! Histories are born from a source sampler, fly isotropically in the plane,
//! and scatter or get absorbed at collisions. Every flight segment deposits
//! `weight * chord length` into each tally cell it crosses. Batches run on
//! independent ChaCha streams keyed by `(seed, batch)`, and their tallies are
//! reduced in batch order, so results never depend on the worker count.

pub mod geometry;
pub mod tally;

use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::source::SourceSpec;

pub use geometry::{build_maze, Material, MaterialTable, MaterialXS, MazeConfig, MazeGeometry, Rect, Region};
pub use tally::{for_each_chord, FluxField, TallyGrid};

/// Hard cap on flight segments per history.
pub const MAX_SEGMENTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPlan {
    pub particles_per_batch: u64,
    pub batches: u64,
    pub seed: u64,
}

impl RunPlan {
    /// 10^5 particles x 10^2 batches.
    pub fn full_scale(seed: u64) -> Self {
        RunPlan {
            particles_per_batch: 100_000,
            batches: 100,
            seed,
        }
    }

    pub fn histories(&self) -> u64 {
        self.particles_per_batch * self.batches
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles_per_batch == 0 || self.batches == 0 {
            return Err(Error::Config(format!(
                "run plan needs positive particles and batches, got {} x {}",
                self.particles_per_batch, self.batches
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Birth {
    pub position: [f64; 2],
    pub weight: f64,
}

/// Anything that can emit source particles.
pub trait BirthSampler: Sync {
    fn sample_birth<R: Rng + ?Sized>(&self, rng: &mut R) -> Birth;
}

impl BirthSampler for SourceSpec {
    fn sample_birth<R: Rng + ?Sized>(&self, rng: &mut R) -> Birth {
        sample_birth(self, rng)
    }
}

/// Gaussian birth position in the xy-plane (z suppressed), weighted by the
/// source energy. Degenerate axes place the particle exactly on the mean.
pub fn sample_birth<R: Rng + ?Sized>(spec: &SourceSpec, rng: &mut R) -> Birth {
    let mut position = [spec.mu[0], spec.mu[1]];
    for (axis, p) in position.iter_mut().enumerate() {
        if spec.sigma[axis] > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *p += spec.sigma[axis] * z;
        }
    }
    Birth {
        position,
        weight: spec.energy_mev,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Absorbed,
    Escaped,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryOutcome {
    pub fate: Fate,
    pub path_length: f64,
    pub segments: usize,
}

/// Per-cell sum of `weight * track length`.
#[derive(Debug, Clone, PartialEq)]
pub struct TallyAccumulator {
    pub grid: TallyGrid,
    pub sums: Vec<f64>,
}

impl TallyAccumulator {
    pub fn new(grid: TallyGrid) -> Self {
        TallyAccumulator {
            grid,
            sums: vec![0.0; grid.cells()],
        }
    }

    pub fn deposit(&mut self, p0: [f64; 2], p1: [f64; 2], weight: f64) {
        let sums = &mut self.sums;
        for_each_chord(&self.grid, p0, p1, |k, len| sums[k] += weight * len);
    }

    pub fn total(&self) -> f64 {
        self.sums.iter().sum()
    }
}

fn isotropic<R: Rng + ?Sized>(rng: &mut R) -> [f64; 2] {
    let theta = 2.0 * PI * rng.random::<f64>();
    [theta.cos(), theta.sin()]
}

/// Follow one particle from `birth` until absorption, escape, or the
/// segment cap.
pub fn transport_history<R: Rng + ?Sized>(
    geometry: &MazeGeometry,
    materials: &MaterialTable,
    birth: Birth,
    rng: &mut R,
    tally: &mut TallyAccumulator,
) -> HistoryOutcome {
    let mut outcome = HistoryOutcome {
        fate: Fate::Escaped,
        path_length: 0.0,
        segments: 0,
    };
    let Some((mut ix, mut iy)) = geometry.locate(birth.position) else {
        return outcome;
    };
    let (xs, ys) = (geometry.x_edges(), geometry.y_edges());
    let (nx, ny) = (geometry.nx(), geometry.ny());
    let mut pos = birth.position;
    let mut dir = isotropic(rng);
    // Optical depth left before the next collision.
    let mut tau = -(1.0 - rng.random::<f64>()).ln();

    loop {
        let Some(xs_here) = materials.get(geometry.cell_material(ix, iy)) else {
            return outcome;
        };
        if outcome.segments >= MAX_SEGMENTS {
            outcome.fate = Fate::Truncated;
            return outcome;
        }

        let to_edge = |p: f64, d: f64, lo: f64, hi: f64| {
            if d > 0.0 {
                (hi - p) / d
            } else if d < 0.0 {
                (lo - p) / d
            } else {
                f64::INFINITY
            }
        };
        let sx = to_edge(pos[0], dir[0], xs[ix], xs[ix + 1]).max(0.0);
        let sy = to_edge(pos[1], dir[1], ys[iy], ys[iy + 1]).max(0.0);
        let s_edge = sx.min(sy);
        let sigma = xs_here.sigma_total;
        let s_collide = if sigma > 0.0 { tau / sigma } else { f64::INFINITY };

        if s_collide < s_edge {
            let next = [pos[0] + s_collide * dir[0], pos[1] + s_collide * dir[1]];
            tally.deposit(pos, next, birth.weight);
            outcome.path_length += s_collide;
            outcome.segments += 1;
            pos = next;
            if rng.random::<f64>() < xs_here.scatter_prob {
                dir = isotropic(rng);
                tau = -(1.0 - rng.random::<f64>()).ln();
            } else {
                outcome.fate = Fate::Absorbed;
                return outcome;
            }
        } else {
            let next = [pos[0] + s_edge * dir[0], pos[1] + s_edge * dir[1]];
            tally.deposit(pos, next, birth.weight);
            outcome.path_length += s_edge;
            outcome.segments += 1;
            tau -= sigma * s_edge;
            pos = next;
            // Cross into the neighbour; a corner hit crosses both edges.
            if sx <= sy {
                if dir[0] > 0.0 {
                    ix += 1;
                } else if ix == 0 {
                    return outcome;
                } else {
                    ix -= 1;
                }
            }
            if sy <= sx {
                if dir[1] > 0.0 {
                    iy += 1;
                } else if iy == 0 {
                    return outcome;
                } else {
                    iy -= 1;
                }
            }
            if ix >= nx || iy >= ny {
                return outcome;
            }
        }
    }
}

/// Result of one batch: per-cell tally sums and the count of capped histories.
#[derive(Debug, Clone)]
struct BatchTally {
    sums: Vec<f64>,
    truncated: u64,
}

fn run_batch<S: BirthSampler>(
    geometry: &MazeGeometry,
    materials: &MaterialTable,
    source: &S,
    grid: &TallyGrid,
    plan: &RunPlan,
    batch: u64,
) -> BatchTally {
    let mut rng = stream(plan.seed, Domain::Transport, 0, batch);
    let mut acc = TallyAccumulator::new(*grid);
    let mut truncated = 0;
    for _ in 0..plan.particles_per_batch {
        let birth = source.sample_birth(&mut rng);
        let out = transport_history(geometry, materials, birth, &mut rng, &mut acc);
        if out.fate == Fate::Truncated {
            truncated += 1;
        }
    }
    BatchTally {
        sums: acc.sums,
        truncated,
    }
}

/// Simulate `plan` for a single source and tally the normalized flux.
pub fn simulate_flux(
    geometry: &MazeGeometry,
    materials: &MaterialTable,
    spec: &SourceSpec,
    grid: &TallyGrid,
    plan: &RunPlan,
    spec_id: u32,
) -> Result<FluxField> {
    spec.validate()?;
    simulate_with_sampler(geometry, materials, spec, grid, plan, spec_id)
}

/// [`simulate_flux`] for an arbitrary birth sampler.
pub fn simulate_with_sampler<S: BirthSampler>(
    geometry: &MazeGeometry,
    materials: &MaterialTable,
    source: &S,
    grid: &TallyGrid,
    plan: &RunPlan,
    spec_id: u32,
) -> Result<FluxField> {
    plan.validate()?;
    grid.validate()?;
    materials.validate()?;

    let batches: Vec<BatchTally> = (0..plan.batches)
        .into_par_iter()
        .map(|b| run_batch(geometry, materials, source, grid, plan, b))
        .collect();

    let scale = grid.normalization / (plan.particles_per_batch as f64 * grid.cell_area());
    let nb = plan.batches as f64;
    let cells = grid.cells();
    let mut values = vec![0.0; cells];
    let mut rel_error = vec![1.0; cells];
    for k in 0..cells {
        let mean = batches.iter().map(|b| b.sums[k] * scale).sum::<f64>() / nb;
        values[k] = mean;
        if mean > 0.0 && plan.batches > 1 {
            let ss: f64 = batches
                .iter()
                .map(|b| {
                    let d = b.sums[k] * scale - mean;
                    d * d
                })
                .sum();
            let std = (ss / (nb - 1.0)).sqrt();
            rel_error[k] = std / (mean * nb.sqrt());
        }
    }
    Ok(FluxField {
        grid: *grid,
        values,
        rel_error,
        spec_id,
        seed: plan.seed,
        truncated_histories: batches.iter().map(|b| b.truncated).sum(),
    })
}

/// Wall-clock seconds of one [`simulate_flux`] call.
pub fn timing_probe(
    plan: &RunPlan,
    geometry: &MazeGeometry,
    materials: &MaterialTable,
    spec: &SourceSpec,
    grid: &TallyGrid,
) -> Result<f64> {
    let start = Instant::now();
    let field = simulate_flux(geometry, materials, spec, grid, plan, 0)?;
    let secs = start.elapsed().as_secs_f64();
    std::hint::black_box(field);
    Ok(secs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    fn desk() -> (MazeGeometry, MaterialTable, TallyGrid) {
        (
            build_maze(&MazeConfig::default()).unwrap(),
            MaterialTable::default(),
            TallyGrid::with_cells(16, 16),
        )
    }

    #[test]
    fn birth_sampling() {
        let spec = SourceSpec::centered(0.37, 4.0).unwrap();
        let mut rng = stream(3, Domain::Probe, 0, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let b = sample_birth(&spec, &mut rng);
            assert_eq!(b.weight, 0.37);
            sum += b.position[1];
        }
        // 3 sigma / sqrt(n) = 0.0095
        assert!((sum / n as f64 - 4.0).abs() < 0.03);

        let delta = SourceSpec::new(0.5, [1.0, -2.0, 0.0], [0.0; 3]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_birth(&delta, &mut rng).position, [1.0, -2.0]);
        }
    }

    #[test]
    fn vacuum_history_deposits_exact_chords() {
        let geometry = build_maze(&MazeConfig::default()).unwrap();
        let grid = TallyGrid::with_cells(16, 16);
        let mut rng = stream(5, Domain::Probe, 0, 0);
        for _ in 0..50 {
            let mut acc = TallyAccumulator::new(grid);
            let birth = Birth {
                position: [0.0, 3.0],
                weight: 0.8,
            };
            let mut replay = rng.clone();
            let out = transport_history(&geometry, &MaterialTable::vacuum(), birth, &mut rng, &mut acc);
            assert_eq!(out.fate, Fate::Escaped);
            // the history's only random draw before flying is its direction
            let dir = isotropic(&mut replay);
            let far = [
                birth.position[0] + 200.0 * dir[0],
                birth.position[1] + 200.0 * dir[1],
            ];
            let mut expected = vec![0.0; grid.cells()];
            for_each_chord(&grid, birth.position, far, |k, l| expected[k] += 0.8 * l);
            for k in 0..grid.cells() {
                assert!((acc.sums[k] - expected[k]).abs() < 1e-9);
            }
            assert!((acc.total() - 0.8 * out.path_length).abs() < 1e-9);
        }
    }

    #[test]
    fn deposited_length_equals_path_length() {
        let (g, m, grid) = desk();
        let spec = SourceSpec::centered(1.0, -2.0).unwrap();
        let mut rng = stream(8, Domain::Probe, 0, 0);
        for _ in 0..200 {
            let mut acc = TallyAccumulator::new(grid);
            let birth = sample_birth(&spec, &mut rng);
            let out = transport_history(&g, &m, birth, &mut rng, &mut acc);
            assert!((acc.total() - out.path_length).abs() <= 1e-9 * (1.0 + out.path_length));
        }
    }

    #[test]
    fn black_wall_stops_everything() {
        let mut cfg = MazeConfig::default();
        cfg.regions = vec![Region {
            rect: Rect::new(5.0, 8.0, -12.0, 52.0),
            material: Material::Concrete,
        }];
        let g = build_maze(&cfg).unwrap();
        let m = MaterialTable {
            concrete: MaterialXS::new(1e3, 0.0).unwrap(),
            air: MaterialXS::vacuum(),
        };
        let grid = TallyGrid::with_cells(64, 64);
        let spec = SourceSpec::new(1.0, [0.0, 20.0, 0.0], [0.0; 3]).unwrap();
        let plan = RunPlan {
            particles_per_batch: 2000,
            batches: 2,
            seed: 1,
        };
        let f = simulate_flux(&g, &m, &spec, &grid, &plan, 0).unwrap();
        let beyond: f64 = (0..grid.cells())
            .filter(|&k| grid.cell_center(k)[0] > 9.0)
            .map(|k| f.values[k])
            .sum();
        assert_eq!(beyond, 0.0);
        let before: f64 = (0..grid.cells())
            .filter(|&k| grid.cell_center(k)[0] < 4.0)
            .map(|k| f.values[k])
            .sum();
        assert!(before > 0.0);
    }

    #[test]
    fn normalization_scales_linearly_and_runs_are_deterministic() {
        let (g, m, grid) = desk();
        let spec = SourceSpec::centered(0.6, 1.0).unwrap();
        let plan = RunPlan {
            particles_per_batch: 300,
            batches: 4,
            seed: 42,
        };
        let a = simulate_flux(&g, &m, &spec, &grid, &plan, 0).unwrap();
        let b = simulate_flux(&g, &m, &spec, &grid, &plan, 0).unwrap();
        assert_eq!(a, b);
        let grid2 = TallyGrid {
            normalization: 2000.0,
            ..grid
        };
        let c = simulate_flux(&g, &m, &spec, &grid2, &plan, 0).unwrap();
        for k in 0..grid.cells() {
            assert_eq!(c.values[k], 2.0 * a.values[k]);
        }
        assert!(a.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn empty_plan_is_rejected() {
        let (g, m, grid) = desk();
        let spec = SourceSpec::centered(0.6, 1.0).unwrap();
        for plan in [
            RunPlan { particles_per_batch: 0, batches: 3, seed: 0 },
            RunPlan { particles_per_batch: 3, batches: 0, seed: 0 },
        ] {
            assert!(matches!(simulate_flux(&g, &m, &spec, &grid, &plan, 0), Err(Error::Config(_))));
        }
    }

    #[test]
    fn result_independent_of_worker_count() {
        let (g, m, grid) = desk();
        let spec = SourceSpec::centered(0.9, -5.0).unwrap();
        let plan = RunPlan { particles_per_batch: 200, batches: 6, seed: 9 };
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let wide = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = serial.install(|| simulate_flux(&g, &m, &spec, &grid, &plan, 0).unwrap());
        let b = wide.install(|| simulate_flux(&g, &m, &spec, &grid, &plan, 0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn timing_probe_is_stable() {
        let (g, m, grid) = desk();
        let spec = SourceSpec::centered(0.5, 0.0).unwrap();
        let plan = RunPlan { particles_per_batch: 1000, batches: 10, seed: 4 };
        let t: Vec<f64> = (0..3).map(|_| timing_probe(&plan, &g, &m, &spec, &grid).unwrap()).collect();
        assert!(t.iter().all(|&s| s < 10.0));
        let (lo, hi) = t.iter().fold((f64::MAX, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
        assert!(hi <= 1.5 * lo + 0.01, "probe times {t:?}");
    }
}
