//! Experiment configuration.
//!
//! A single TOML document drives every pipeline stage. Its hash (SHA-256 of
//! the canonical re-serialization, with `out_dir` blanked) is written into
//! every artifact so outputs can be traced to their settings without the
//! output location leaking into them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{validate_fraction, CorpusSetup};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::models::TrainConfig;
use crate::source::{SensorGrid, SourceRanges};
use crate::transport::{build_maze, MaterialTable, MazeConfig, MazeGeometry, RunPlan, TallyGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub functions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub particles_per_batch: u64,
    pub batches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// Simulations averaged for the transport side of the ratio.
    pub simulations: usize,
    /// Full-field predictions averaged for the model side.
    pub inference_functions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub out_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub source: SourceRanges,
    pub sensors: SensorGrid,
    pub tally: TallyGrid,
    pub transport: TransportConfig,
    pub materials: MaterialTable,
    pub geometry: MazeConfig,
    pub training: TrainConfig,
    /// FCN and CNN share these settings.
    pub baselines: TrainConfig,
    pub subsets: Vec<f64>,
    pub timing: TimingConfig,
}

impl ExperimentConfig {
    /// Small configuration used for quick runs and tests.
    pub fn desk() -> Self {
        ExperimentConfig {
            seed: 2024,
            out_dir: PathBuf::from("out"),
            corpus: CorpusConfig { functions: 200 },
            source: SourceRanges::default(),
            sensors: SensorGrid::default(),
            tally: TallyGrid::with_cells(16, 16),
            transport: TransportConfig {
                particles_per_batch: 2_000,
                batches: 10,
            },
            materials: MaterialTable::default(),
            geometry: MazeConfig::default(),
            training: TrainConfig {
                iterations: 10_000,
                seed: 11,
                ..TrainConfig::default()
            },
            baselines: TrainConfig {
                iterations: 10_000,
                seed: 13,
                ..TrainConfig::default()
            },
            subsets: vec![0.5, 0.9],
            timing: TimingConfig {
                simulations: 3,
                inference_functions: 50,
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.functions < 2 {
            return Err(Error::Config("corpus.functions must be at least 2".into()));
        }
        self.source.validate()?;
        self.sensors.validate()?;
        self.tally.validate()?;
        self.plan(0).validate()?;
        self.materials.validate()?;
        self.training.validate()?;
        self.baselines.validate()?;
        if self.subsets.is_empty() {
            return Err(Error::Config("subsets must list at least one fraction".into()));
        }
        for &f in &self.subsets {
            validate_fraction(f)?;
        }
        if self.timing.simulations == 0 || self.timing.inference_functions == 0 {
            return Err(Error::Config("timing counts must be positive".into()));
        }
        Ok(())
    }

    pub fn plan(&self, seed: u64) -> RunPlan {
        RunPlan {
            particles_per_batch: self.transport.particles_per_batch,
            batches: self.transport.batches,
            seed,
        }
    }

    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        sha256_hex(c.to_toml().as_bytes())
    }

    pub fn geometry(&self) -> Result<MazeGeometry> {
        build_maze(&self.geometry)
    }

    pub fn corpus_setup<'a>(&'a self, geometry: &'a MazeGeometry) -> CorpusSetup<'a> {
        CorpusSetup {
            geometry,
            materials: &self.materials,
            sensor_grid: &self.sensors,
            tally_grid: &self.tally,
            ranges: &self.source,
            plan: self.plan(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::desk();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = ExperimentConfig::desk();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn bundled_desk_config_matches() {
        let text = include_str!("../configs/desk.toml");
        assert_eq!(ExperimentConfig::from_toml(text).unwrap(), ExperimentConfig::desk());
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ExperimentConfig::desk();
        c.subsets = vec![1.5];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ExperimentConfig::desk();
        c.transport.batches = 0;
        assert!(c.validate().is_err());
        assert!(matches!(
            ExperimentConfig::from_toml("seed = 1\nbogus = 2"),
            Err(Error::Config(_))
        ));
    }
}
