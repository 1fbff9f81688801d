//! Dataset container.
//!
//! Framed by [`crate::io::seal`] with magic `DONDSET\0`, version 1. The
//! payload, little-endian throughout:
//!
//! ```text
//! str   config_hash
//! u64   seed
//! u8    sensor axis (0 = x, 1 = y); u64 count; f64 lo; f64 hi
//! u64   nx; u64 ny; f64 x_lo, x_hi, y_lo, y_hi, normalization
//! u64   entry count, then per entry:
//!         u32 spec_id; f64 energy; f64 mu[3]; f64 sigma[3]
//!         f64[] sensors
//!         u64 flux seed; u64 truncated histories
//!         f64[] flux values (row-major, rows along y); f64[] rel_error
//! u8    has_split; if 1: u64[] train positions; u64[] test positions
//! u8    has_norm;  if 1: f64[] sensor_mean; f64[] sensor_std;
//!         f64 floor, target_mean, target_std; f64 coord_min[2], coord_max[2]
//! ```
//!
//! `f64[]`/`u64[]` are a u64 length followed by the elements; `str` is a u64
//! byte length followed by UTF-8.

use std::path::Path;

use super::{Corpus, CorpusEntry, NormMeta, Provenance, SplitCorpus};
use crate::error::{Error, FormatError, Result};
use crate::io::{seal, unseal, write_atomic, Decoder, Encoder};
use crate::source::{Axis, SensorGrid, SensorVector, SourceSpec};
use crate::transport::{FluxField, TallyGrid};

pub const MAGIC: [u8; 8] = *b"DONDSET\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub corpus: Corpus,
    pub split: Option<SplitCorpus>,
    pub norm: Option<NormMeta>,
}

pub(crate) fn put_tally_grid(e: &mut Encoder, g: &TallyGrid) {
    e.u64(g.nx as u64);
    e.u64(g.ny as u64);
    for v in [g.x.0, g.x.1, g.y.0, g.y.1, g.normalization] {
        e.f64(v);
    }
}

pub(crate) fn get_tally_grid(d: &mut Decoder<'_>) -> std::result::Result<TallyGrid, FormatError> {
    Ok(TallyGrid {
        nx: d.u64()? as usize,
        ny: d.u64()? as usize,
        x: (d.f64()?, d.f64()?),
        y: (d.f64()?, d.f64()?),
        normalization: d.f64()?,
    })
}

pub(crate) fn put_norm(e: &mut Encoder, n: &NormMeta) {
    e.f64s(&n.sensor_mean);
    e.f64s(&n.sensor_std);
    e.f64(n.target_floor);
    e.f64(n.target_mean);
    e.f64(n.target_std);
    for v in n.coord_min.iter().chain(&n.coord_max) {
        e.f64(*v);
    }
}

pub(crate) fn get_norm(d: &mut Decoder<'_>) -> std::result::Result<NormMeta, FormatError> {
    let sensor_mean = d.f64s()?;
    let sensor_std = d.f64s()?;
    if sensor_mean.len() != sensor_std.len() {
        return Err(FormatError::Malformed("sensor mean/std lengths differ".into()));
    }
    Ok(NormMeta {
        sensor_mean,
        sensor_std,
        target_floor: d.f64()?,
        target_mean: d.f64()?,
        target_std: d.f64()?,
        coord_min: [d.f64()?, d.f64()?],
        coord_max: [d.f64()?, d.f64()?],
    })
}

pub fn encode_dataset(file: &DatasetFile) -> Vec<u8> {
    let c = &file.corpus;
    let mut e = Encoder::default();
    e.str(&c.provenance.config_hash);
    e.u64(c.provenance.seed);
    e.u8(match c.sensor_grid.axis {
        Axis::X => 0,
        Axis::Y => 1,
    });
    e.u64(c.sensor_grid.count as u64);
    e.f64(c.sensor_grid.lo);
    e.f64(c.sensor_grid.hi);
    put_tally_grid(&mut e, &c.tally_grid);
    e.u64(c.entries.len() as u64);
    for entry in &c.entries {
        e.u32(entry.spec_id);
        e.f64(entry.spec.energy_mev);
        for v in entry.spec.mu.iter().chain(&entry.spec.sigma) {
            e.f64(*v);
        }
        e.f64s(&entry.sensors.values);
        e.u64(entry.flux.seed);
        e.u64(entry.flux.truncated_histories);
        e.f64s(&entry.flux.values);
        e.f64s(&entry.flux.rel_error);
    }
    match &file.split {
        Some(s) => {
            e.u8(1);
            e.u64s(&s.train.iter().map(|&v| v as u64).collect::<Vec<_>>());
            e.u64s(&s.test.iter().map(|&v| v as u64).collect::<Vec<_>>());
        }
        None => e.u8(0),
    }
    match &file.norm {
        Some(n) => {
            e.u8(1);
            put_norm(&mut e, n);
        }
        None => e.u8(0),
    }
    seal(MAGIC, VERSION, &e.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile> {
    let payload = unseal(MAGIC, VERSION, bytes)?;
    let mut d = Decoder::new(payload);
    let config_hash = d.str()?;
    let seed = d.u64()?;
    let axis = match d.u8()? {
        0 => Axis::X,
        1 => Axis::Y,
        t => return Err(FormatError::Malformed(format!("sensor axis tag {t}")).into()),
    };
    let sensor_grid = SensorGrid {
        axis,
        count: d.u64()? as usize,
        lo: d.f64()?,
        hi: d.f64()?,
    };
    let tally_grid = get_tally_grid(&mut d)?;
    let n = d.u64()? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let spec_id = d.u32()?;
        let energy_mev = d.f64()?;
        let mu = [d.f64()?, d.f64()?, d.f64()?];
        let sigma = [d.f64()?, d.f64()?, d.f64()?];
        let values = d.f64s()?;
        let flux_seed = d.u64()?;
        let truncated_histories = d.u64()?;
        let flux_values = d.f64s()?;
        let rel_error = d.f64s()?;
        entries.push(CorpusEntry {
            spec_id,
            spec: SourceSpec {
                energy_mev,
                mu,
                sigma,
            },
            sensors: SensorVector { values, spec_id },
            flux: FluxField {
                grid: tally_grid,
                values: flux_values,
                rel_error,
                spec_id,
                seed: flux_seed,
                truncated_histories,
            },
        });
    }
    let split = match d.u8()? {
        0 => None,
        1 => Some(SplitCorpus {
            train: d.u64s()?.into_iter().map(|v| v as usize).collect(),
            test: d.u64s()?.into_iter().map(|v| v as usize).collect(),
        }),
        t => return Err(FormatError::Malformed(format!("split flag {t}")).into()),
    };
    let norm = match d.u8()? {
        0 => None,
        1 => Some(get_norm(&mut d)?),
        t => return Err(FormatError::Malformed(format!("norm flag {t}")).into()),
    };
    d.finish()?;
    let corpus = Corpus {
        entries,
        sensor_grid,
        tally_grid,
        provenance: Provenance { seed, config_hash },
    };
    corpus
        .validate()
        .map_err(|e| Error::Format(FormatError::Malformed(e.to_string())))?;
    if let Some(s) = &split {
        if s.train.iter().chain(&s.test).any(|&p| p >= corpus.len()) {
            return Err(FormatError::Malformed("split position out of range".into()).into());
        }
    }
    Ok(DatasetFile { corpus, split, norm })
}

pub fn write_dataset(file: &DatasetFile, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(file))
}

pub fn read_dataset(path: &Path) -> Result<DatasetFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}
