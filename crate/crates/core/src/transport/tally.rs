//! Track-length tally on a uniform 2D mesh.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TallyGrid {
    pub nx: usize,
    pub ny: usize,
    pub x: (f64, f64),
    pub y: (f64, f64),
    /// Multiplies every per-source-particle flux value.
    pub normalization: f64,
}

impl Default for TallyGrid {
    fn default() -> Self {
        TallyGrid {
            nx: 80,
            ny: 80,
            x: (-12.0, 52.0),
            y: (-12.0, 52.0),
            normalization: 1000.0,
        }
    }
}

impl TallyGrid {
    pub fn with_cells(nx: usize, ny: usize) -> Self {
        TallyGrid {
            nx,
            ny,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::Config("tally grid needs at least one cell per axis".into()));
        }
        if !(self.x.0 < self.x.1 && self.y.0 < self.y.1) {
            return Err(Error::Config(format!(
                "tally extents {:?} x {:?} have no area",
                self.x, self.y
            )));
        }
        if !(self.normalization.is_finite() && self.normalization > 0.0) {
            return Err(Error::Config(format!(
                "normalization must be positive, got {}",
                self.normalization
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx(&self) -> f64 {
        (self.x.1 - self.x.0) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y.1 - self.y.0) / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    /// Flat index, row-major with rows along y.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn unindex(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn cell_center(&self, k: usize) -> [f64; 2] {
        let (ix, iy) = self.unindex(k);
        [
            self.x.0 + (ix as f64 + 0.5) * self.dx(),
            self.y.0 + (iy as f64 + 0.5) * self.dy(),
        ]
    }

    pub fn same_mesh(&self, other: &TallyGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.x == other.x && self.y == other.y
    }
}

/// Visit every tally cell crossed by the segment `p0 -> p1`, reporting the
/// chord length inside each. Parts of the segment outside the grid are
/// ignored. Cells are visited in order along the segment.
pub fn for_each_chord(grid: &TallyGrid, p0: [f64; 2], p1: [f64; 2], mut visit: impl FnMut(usize, f64)) {
    let d = [p1[0] - p0[0], p1[1] - p0[1]];
    let len = d[0].hypot(d[1]);
    if !(len > 0.0) {
        return;
    }

    // Liang-Barsky clip in the segment parameter t in [0, 1].
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, dv, lo, hi) in [(p0[0], d[0], grid.x.0, grid.x.1), (p0[1], d[1], grid.y.0, grid.y.1)] {
        if dv == 0.0 {
            if p < lo || p > hi {
                return;
            }
        } else {
            let (a, b) = ((lo - p) / dv, (hi - p) / dv);
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    if t0 >= t1 {
        return;
    }

    let (dx, dy) = (grid.dx(), grid.dy());
    // Flooring the entry point can only err toward the cell just behind it
    // (floating noise on an edge); the walk leaves that cell after a zero-length step.
    let cell_of = |v: f64, lo: f64, h: f64, n: usize| -> isize {
        (((v - lo) / h).floor() as isize).clamp(0, n as isize - 1)
    };
    let mut ix = cell_of(p0[0] + t0 * d[0], grid.x.0, dx, grid.nx);
    let mut iy = cell_of(p0[1] + t0 * d[1], grid.y.0, dy, grid.ny);

    let step_x: isize = if d[0] > 0.0 { 1 } else { -1 };
    let step_y: isize = if d[1] > 0.0 { 1 } else { -1 };
    let next_boundary = |i: isize, step: isize, lo: f64, h: f64, p: f64, dv: f64| -> f64 {
        if dv == 0.0 {
            f64::INFINITY
        } else {
            let edge = lo + h * (if step > 0 { i + 1 } else { i }) as f64;
            (edge - p) / dv
        }
    };
    let mut tx = next_boundary(ix, step_x, grid.x.0, dx, p0[0], d[0]);
    let mut ty = next_boundary(iy, step_y, grid.y.0, dy, p0[1], d[1]);
    let dtx = if d[0] == 0.0 { f64::INFINITY } else { dx / d[0].abs() };
    let dty = if d[1] == 0.0 { f64::INFINITY } else { dy / d[1].abs() };

    let mut t = t0;
    loop {
        let t_next = tx.min(ty).min(t1);
        if t_next > t {
            visit(grid.index(ix as usize, iy as usize), (t_next - t) * len);
            t = t_next;
        }
        if t >= t1 {
            break;
        }
        if tx <= ty {
            ix += step_x;
            tx += dtx;
        } else {
            iy += step_y;
            ty += dty;
        }
        if ix < 0 || iy < 0 || ix >= grid.nx as isize || iy >= grid.ny as isize {
            break;
        }
    }
}

/// Tallied flux over a [`TallyGrid`], energy-integrated and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxField {
    pub grid: TallyGrid,
    /// Row-major (rows along y) cell values.
    pub values: Vec<f64>,
    /// Standard error of the batch means divided by the mean; 1.0 where the
    /// mean is zero or fewer than two batches ran.
    pub rel_error: Vec<f64>,
    pub spec_id: u32,
    pub seed: u64,
    /// Histories stopped by the segment cap.
    pub truncated_histories: u64,
}

const FIELD_MAGIC: &str = "# fluxfield v1";

impl FluxField {
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.grid.index(ix, iy)]
    }

    /// Row-major text dump: a `#` header with extents, spec id and seed, then
    /// `ny` lines of `nx` comma-separated values, then the same block for the
    /// relative errors after a `# rel_error` marker.
    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        let _ = writeln!(s, "{FIELD_MAGIC}");
        let _ = writeln!(
            s,
            "# nx={} ny={} x_lo={} x_hi={} y_lo={} y_hi={} normalization={}",
            g.nx, g.ny, g.x.0, g.x.1, g.y.0, g.y.1, g.normalization
        );
        let _ = writeln!(
            s,
            "# spec_id={} seed={} truncated_histories={}",
            self.spec_id, self.seed, self.truncated_histories
        );
        let block = |s: &mut String, v: &[f64]| {
            for row in v.chunks(g.nx) {
                let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
                let _ = writeln!(s, "{}", line.join(","));
            }
        };
        block(&mut s, &self.values);
        let _ = writeln!(s, "# rel_error");
        block(&mut s, &self.rel_error);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let malformed = |m: &str| Error::Format(FormatError::Malformed(m.to_string()));
        let mut lines = text.lines();
        if lines.next() != Some(FIELD_MAGIC) {
            return Err(Error::Format(FormatError::Malformed("missing fluxfield header".into())));
        }
        let mut kv = std::collections::HashMap::new();
        for _ in 0..2 {
            let line = lines.next().ok_or_else(|| FormatError::Truncated("field header".into()))?;
            for tok in line.trim_start_matches('#').split_whitespace() {
                let (k, v) = tok.split_once('=').ok_or_else(|| malformed(tok))?;
                kv.insert(k.to_string(), v.to_string());
            }
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k)
                .ok_or_else(|| malformed(&format!("missing {k}")))?
                .parse::<f64>()
                .map_err(|_| malformed(&format!("bad {k}")))
        };
        let int = |k: &str| -> Result<u64> {
            kv.get(k)
                .ok_or_else(|| malformed(&format!("missing {k}")))?
                .parse::<u64>()
                .map_err(|_| malformed(&format!("bad {k}")))
        };
        let grid = TallyGrid {
            nx: int("nx")? as usize,
            ny: int("ny")? as usize,
            x: (num("x_lo")?, num("x_hi")?),
            y: (num("y_lo")?, num("y_hi")?),
            normalization: num("normalization")?,
        };
        grid.validate()?;
        let read_block = |lines: &mut std::str::Lines<'_>| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(grid.cells());
            for _ in 0..grid.ny {
                let line = lines.next().ok_or_else(|| FormatError::Truncated("field rows".into()))?;
                for tok in line.split(',') {
                    v.push(tok.trim().parse::<f64>().map_err(|_| malformed("bad value"))?);
                }
            }
            if v.len() != grid.cells() {
                return Err(malformed("row widths do not match nx"));
            }
            Ok(v)
        };
        let values = read_block(&mut lines)?;
        if lines.next() != Some("# rel_error") {
            return Err(FormatError::Truncated("rel_error block".into()).into());
        }
        let rel_error = read_block(&mut lines)?;
        Ok(FluxField {
            grid,
            values,
            rel_error,
            spec_id: int("spec_id")? as u32,
            seed: int("seed")?,
            truncated_histories: int("truncated_histories")?,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
