//! Rectilinear maze geometry.
//!
//! The maze is described as a background material plus axis-aligned wall
//! rectangles. Building it compresses every rectangle edge into a pair of
//! sorted coordinate axes, giving a non-uniform grid of elementary cells that
//! tiles the domain exactly; each elementary cell carries one material. Point
//! location is a binary search per axis, and particle flights step cell to
//! cell along the compressed axes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Material {
    Concrete,
    Air,
    /// Exterior: particles entering it are lost.
    Void,
}

/// One-group cross sections of a material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialXS {
    /// Total macroscopic cross section (1/cm).
    pub sigma_total: f64,
    /// Probability that a collision is a scatter; the rest absorbs.
    pub scatter_prob: f64,
}

impl MaterialXS {
    pub fn new(sigma_total: f64, scatter_prob: f64) -> Result<Self> {
        let xs = MaterialXS {
            sigma_total,
            scatter_prob,
        };
        xs.validate()?;
        Ok(xs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_total.is_finite() && self.sigma_total >= 0.0) {
            return Err(Error::Config(format!(
                "sigma_total must be finite and >= 0, got {}",
                self.sigma_total
            )));
        }
        if !(0.0..=1.0).contains(&self.scatter_prob) {
            return Err(Error::Config(format!(
                "scatter_prob must lie in [0, 1], got {}",
                self.scatter_prob
            )));
        }
        Ok(())
    }

    pub fn vacuum() -> Self {
        MaterialXS {
            sigma_total: 0.0,
            scatter_prob: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialTable {
    pub concrete: MaterialXS,
    pub air: MaterialXS,
}

impl Default for MaterialTable {
    fn default() -> Self {
        MaterialTable {
            concrete: MaterialXS {
                sigma_total: 0.4,
                scatter_prob: 0.9,
            },
            air: MaterialXS {
                sigma_total: 1e-4,
                scatter_prob: 0.99,
            },
        }
    }
}

impl MaterialTable {
    pub fn vacuum() -> Self {
        MaterialTable {
            concrete: MaterialXS::vacuum(),
            air: MaterialXS::vacuum(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.concrete.validate()?;
        self.air.validate()
    }

    /// `None` for the void, which terminates histories.
    pub fn get(&self, material: Material) -> Option<&MaterialXS> {
        match material {
            Material::Concrete => Some(&self.concrete),
            Material::Air => Some(&self.air),
            Material::Void => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect {
            x: (x0, x1),
            y: (y0, y1),
        }
    }

    pub fn area(&self) -> f64 {
        (self.x.1 - self.x.0) * (self.y.1 - self.y.0)
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x.0 && p[0] <= self.x.1 && p[1] >= self.y.0 && p[1] <= self.y.1
    }

    fn overlaps(&self, other: &Rect) -> bool {
        self.x.0 < other.x.1 && other.x.0 < self.x.1 && self.y.0 < other.y.1 && other.y.0 < self.y.1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub rect: Rect,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeConfig {
    pub domain: Rect,
    pub background: Material,
    pub regions: Vec<Region>,
}

impl Default for MazeConfig {
    /// Concrete maze over [-12, 52]^2 with 3 cm walls: the source chamber on
    /// the left, two baffles forming a serpentine path, and an entry corridor
    /// through the right wall.
    fn default() -> Self {
        let wall = |x0, x1, y0, y1| Region {
            rect: Rect::new(x0, x1, y0, y1),
            material: Material::Concrete,
        };
        MazeConfig {
            domain: Rect::new(-12.0, 52.0, -12.0, 52.0),
            background: Material::Air,
            regions: vec![
                wall(-12.0, 52.0, -12.0, -9.0),
                wall(-12.0, 52.0, 49.0, 52.0),
                wall(-12.0, -9.0, -9.0, 49.0),
                wall(49.0, 52.0, -9.0, 37.0),
                wall(49.0, 52.0, 46.0, 49.0),
                // baffle rising from the floor, open at the top
                wall(12.0, 15.0, -9.0, 37.0),
                // baffle hanging from the ceiling, open at the bottom
                wall(30.0, 33.0, 3.0, 49.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MazeGeometry {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major over (iy, ix) elementary cells.
    cells: Vec<Material>,
}

pub fn build_maze(config: &MazeConfig) -> Result<MazeGeometry> {
    let d = config.domain;
    let finite = |r: &Rect| [r.x.0, r.x.1, r.y.0, r.y.1].iter().all(|v| v.is_finite());
    if !finite(&d) || d.x.0 >= d.x.1 || d.y.0 >= d.y.1 {
        return Err(Error::Config(format!("degenerate domain {d:?}")));
    }
    for (i, r) in config.regions.iter().enumerate() {
        let rect = r.rect;
        if !finite(&rect) || rect.x.0 >= rect.x.1 || rect.y.0 >= rect.y.1 {
            return Err(Error::Config(format!("region {i} is degenerate: {rect:?}")));
        }
        if rect.x.0 < d.x.0 || rect.x.1 > d.x.1 || rect.y.0 < d.y.0 || rect.y.1 > d.y.1 {
            return Err(Error::Config(format!("region {i} extends outside the domain")));
        }
        for (j, other) in config.regions.iter().enumerate().take(i) {
            if other.material != r.material && rect.overlaps(&other.rect) {
                return Err(Error::Config(format!(
                    "regions {j} ({:?}) and {i} ({:?}) overlap with different materials",
                    other.material, r.material
                )));
            }
        }
    }

    let axis = |lo: f64, hi: f64, edges: &mut dyn Iterator<Item = f64>| {
        let mut v: Vec<f64> = std::iter::once(lo).chain(std::iter::once(hi)).chain(edges).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let xs = axis(
        d.x.0,
        d.x.1,
        &mut config.regions.iter().flat_map(|r| [r.rect.x.0, r.rect.x.1]),
    );
    let ys = axis(
        d.y.0,
        d.y.1,
        &mut config.regions.iter().flat_map(|r| [r.rect.y.0, r.rect.y.1]),
    );

    let mut cells = Vec::with_capacity((xs.len() - 1) * (ys.len() - 1));
    for wy in ys.windows(2) {
        for wx in xs.windows(2) {
            let c = [0.5 * (wx[0] + wx[1]), 0.5 * (wy[0] + wy[1])];
            let m = config
                .regions
                .iter()
                .find(|r| r.rect.contains(c))
                .map_or(config.background, |r| r.material);
            cells.push(m);
        }
    }
    Ok(MazeGeometry { xs, ys, cells })
}

impl MazeGeometry {
    pub fn nx(&self) -> usize {
        self.xs.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.ys.len() - 1
    }

    pub fn x_edges(&self) -> &[f64] {
        &self.xs
    }

    pub fn y_edges(&self) -> &[f64] {
        &self.ys
    }

    pub fn domain(&self) -> Rect {
        Rect::new(self.xs[0], self.xs[self.nx()], self.ys[0], self.ys[self.ny()])
    }

    pub fn cell_material(&self, ix: usize, iy: usize) -> Material {
        self.cells[iy * self.nx() + ix]
    }

    pub fn cell_rect(&self, ix: usize, iy: usize) -> Rect {
        Rect::new(self.xs[ix], self.xs[ix + 1], self.ys[iy], self.ys[iy + 1])
    }

    /// Elementary cell containing `p`; points on an interior edge resolve to
    /// the cell above/right of it. `None` outside the closed domain.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        Some((locate_axis(&self.xs, p[0])?, locate_axis(&self.ys, p[1])?))
    }

    /// Material at `p`, with the void outside the domain.
    pub fn material_at(&self, p: [f64; 2]) -> Material {
        self.locate(p)
            .map_or(Material::Void, |(ix, iy)| self.cell_material(ix, iy))
    }

    /// The elementary cells as (rect, material) regions.
    pub fn regions(&self) -> impl Iterator<Item = (Rect, Material)> + '_ {
        (0..self.ny()).flat_map(move |iy| {
            (0..self.nx()).map(move |ix| (self.cell_rect(ix, iy), self.cell_material(ix, iy)))
        })
    }

    pub fn material_area(&self, material: Material) -> f64 {
        self.regions()
            .filter(|(_, m)| *m == material)
            .map(|(r, _)| r.area())
            .sum()
    }
}

fn locate_axis(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[n]) {
        return None;
    }
    let i = edges.partition_point(|&e| e <= v);
    Some(i.saturating_sub(1).min(n - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_maze_materials() {
        let g = build_maze(&MazeConfig::default()).unwrap();
        assert_eq!(g.material_at([-10.5, 20.0]), Material::Concrete);
        assert_eq!(g.material_at([20.0, 50.0]), Material::Concrete);
        assert_eq!(g.material_at([13.5, 0.0]), Material::Concrete);
        assert_eq!(g.material_at([0.0, 0.0]), Material::Air);
        for y in [-9.0, -4.5, 0.0, 4.5, 9.0] {
            assert_eq!(g.material_at([0.0, y]), Material::Air, "source line at y={y}");
        }
        assert_eq!(g.material_at([50.5, 40.0]), Material::Air, "entry corridor");
        assert_eq!(g.material_at([60.0, 0.0]), Material::Void);
    }

    #[test]
    fn default_maze_tiles_domain() {
        let g = build_maze(&MazeConfig::default()).unwrap();
        let total: f64 = g.regions().map(|(r, _)| r.area()).sum();
        assert!((total - 64.0 * 64.0).abs() < 1e-9);
        let by_material = g.material_area(Material::Air) + g.material_area(Material::Concrete);
        assert!((by_material - 64.0 * 64.0).abs() < 1e-9);
        // walls are disjoint in the default config, so concrete area is their sum
        let walls: f64 = MazeConfig::default().regions.iter().map(|r| r.rect.area()).sum();
        assert!((g.material_area(Material::Concrete) - walls).abs() < 1e-9);
    }

    #[test]
    fn contradictory_overlap_rejected() {
        let mut cfg = MazeConfig::default();
        cfg.regions.push(Region {
            rect: Rect::new(10.0, 14.0, 0.0, 5.0),
            material: Material::Void,
        });
        assert!(matches!(build_maze(&cfg), Err(Error::Config(_))));
        // same-material overlap is a union, not a contradiction
        let mut cfg = MazeConfig::default();
        cfg.regions.push(Region {
            rect: Rect::new(10.0, 14.0, 0.0, 5.0),
            material: Material::Concrete,
        });
        assert!(build_maze(&cfg).is_ok());
    }

    #[test]
    fn region_outside_domain_rejected() {
        let mut cfg = MazeConfig::default();
        cfg.regions.push(Region {
            rect: Rect::new(50.0, 60.0, 0.0, 5.0),
            material: Material::Concrete,
        });
        assert!(build_maze(&cfg).is_err());
    }

    #[test]
    fn point_location_on_edges() {
        let g = build_maze(&MazeConfig::default()).unwrap();
        assert!(g.locate([-12.0, -12.0]).is_some());
        assert!(g.locate([52.0, 52.0]).is_some());
        assert!(g.locate([52.000001, 0.0]).is_none());
        assert!(g.locate([f64::NAN, 0.0]).is_none());
    }

    #[test]
    fn bad_cross_sections_rejected() {
        assert!(MaterialXS::new(-1.0, 0.5).is_err());
        assert!(MaterialXS::new(1.0, 1.5).is_err());
        assert!(MaterialXS::new(0.0, 0.0).is_ok());
    }
}
