//! Gaussian neutron-source input functions.
//!
//! A source is mono-energetic with a separable Gaussian spatial profile; its
//! energy-density distribution `u(E, x) = E * phi(x)` is the input function
//! the operator network learns from. Axes with zero standard deviation are
//! delta constraints: particles are born exactly on the mean along that axis
//! and the axis drops out of the density product.

use std::f64::consts::PI;

use rand::distr::{Distribution, Open01, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub energy_mev: f64,
    /// Mean position (cm).
    pub mu: [f64; 3],
    /// Per-axis standard deviation (cm); zero marks a degenerate axis.
    pub sigma: [f64; 3],
}

impl SourceSpec {
    pub fn new(energy_mev: f64, mu: [f64; 3], sigma: [f64; 3]) -> Result<Self> {
        let spec = SourceSpec {
            energy_mev,
            mu,
            sigma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The fixed-shape source used throughout: sigma = (1, 1, 0), mu = (0, mu_y, 0).
    pub fn centered(energy_mev: f64, mu_y: f64) -> Result<Self> {
        Self::new(energy_mev, [0.0, mu_y, 0.0], [1.0, 1.0, 0.0])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.energy_mev.is_finite() && self.energy_mev >= 0.0) {
            return Err(Error::Domain(format!(
                "energy must be finite and non-negative, got {}",
                self.energy_mev
            )));
        }
        if self.mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Domain(format!("non-finite mean {:?}", self.mu)));
        }
        make_covariance(self.sigma)?;
        Ok(())
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix {
            diagonal: self.sigma.map(|s| s * s),
        }
    }

    pub fn is_degenerate_axis(&self, axis: usize) -> bool {
        self.sigma[axis] == 0.0
    }
}

/// Diagonal covariance of the separable source. Off-diagonals are zero by
/// construction, so only the diagonal is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix {
    pub diagonal: [f64; 3],
}

impl CovarianceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonal[i]
        } else {
            0.0
        }
    }
}

pub fn make_covariance(sigma: [f64; 3]) -> Result<CovarianceMatrix> {
    if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::Domain(format!(
            "standard deviations must be finite and non-negative, got {s} in {sigma:?}"
        )));
    }
    Ok(CovarianceMatrix {
        diagonal: sigma.map(|s| s * s),
    })
}

/// Separable Gaussian density over the non-degenerate axes of `spec`.
pub fn gaussian_density(x: [f64; 3], spec: &SourceSpec) -> f64 {
    (0..3)
        .filter(|&j| !spec.is_degenerate_axis(j))
        .map(|j| {
            let var = spec.sigma[j] * spec.sigma[j];
            let d = x[j] - spec.mu[j];
            (-d * d / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
        })
        .product()
}

/// Energy-density distribution `E * phi(x)`.
pub fn source_intensity(x: [f64; 3], spec: &SourceSpec) -> f64 {
    spec.energy_mev * gaussian_density(x, spec)
}

/// Sampling ranges for the randomized source parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceRanges {
    /// Open interval for the energy (MeV).
    pub energy_mev: (f64, f64),
    /// Closed interval for the y component of the mean (cm).
    pub mu_y: (f64, f64),
}

impl Default for SourceRanges {
    fn default() -> Self {
        SourceRanges {
            energy_mev: (0.0, 1.0),
            mu_y: (-9.0, 9.0),
        }
    }
}

impl SourceRanges {
    pub fn validate(&self) -> Result<()> {
        let (elo, ehi) = self.energy_mev;
        if !(elo.is_finite() && ehi.is_finite() && elo >= 0.0 && elo < ehi) {
            return Err(Error::Config(format!(
                "energy range ({elo}, {ehi}) must be a non-empty interval of non-negative values"
            )));
        }
        let (ylo, yhi) = self.mu_y;
        if !(ylo.is_finite() && yhi.is_finite() && ylo <= yhi) {
            return Err(Error::Config(format!(
                "mu_y range [{ylo}, {yhi}] is empty or inverted"
            )));
        }
        Ok(())
    }
}

/// Draw a source with uniformly distributed energy and mean y position; all
/// other parameters stay at their fixed defaults.
pub fn sample_source_spec<R: Rng + ?Sized>(rng: &mut R, ranges: &SourceRanges) -> Result<SourceSpec> {
    ranges.validate()?;
    let (elo, ehi) = ranges.energy_mev;
    let u: f64 = Open01.sample(rng);
    let energy = elo + (ehi - elo) * u;
    let (ylo, yhi) = ranges.mu_y;
    let mu_y = if ylo == yhi {
        ylo
    } else {
        Uniform::new_inclusive(ylo, yhi)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng)
    };
    SourceSpec::centered(energy, mu_y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }
}

/// Fixed sensor locations: `count` evenly spaced points on `[lo, hi]`,
/// both endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorGrid {
    pub axis: Axis,
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for SensorGrid {
    fn default() -> Self {
        SensorGrid {
            axis: Axis::Y,
            count: 190,
            lo: -9.0,
            hi: 9.0,
        }
    }
}

impl SensorGrid {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("sensor count must be positive".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite()) || (self.count > 1 && self.lo >= self.hi) {
            return Err(Error::Config(format!(
                "sensor interval [{}, {}] is invalid",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.hi - self.lo) / (self.count - 1) as f64
        }
    }

    pub fn positions(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count && self.count > 1 {
                    self.hi
                } else {
                    self.lo + h * i as f64
                }
            })
            .collect()
    }
}

/// Source energy density sampled at every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorVector {
    pub values: Vec<f64>,
    pub spec_id: u32,
}

/// Sample `spec` at every sensor position. Off-axis coordinates sit at the
/// source mean for those axes.
pub fn discretize_source(spec: &SourceSpec, grid: &SensorGrid, spec_id: u32) -> SensorVector {
    let axis = grid.axis.index();
    let values = grid
        .positions()
        .into_iter()
        .map(|p| {
            let mut x = spec.mu;
            x[axis] = p;
            source_intensity(x, spec)
        })
        .collect();
    SensorVector { values, spec_id }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(make_covariance([1.0, 1.0, 0.0]).unwrap().diagonal, [1.0, 1.0, 0.0]);
        assert_eq!(make_covariance([0.0; 3]).unwrap().diagonal, [0.0; 3]);
        let c = make_covariance([2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.diagonal, [4.0, 9.0, 16.0]);
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(2, 2), 16.0);
        assert!(matches!(make_covariance([1.0, -0.1, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn density_examples() {
        let spec = SourceSpec::new(1.0, [0.0, 2.0, 0.0], [1.0, 1.0, 1.0]).unwrap();
        assert!(close(gaussian_density(spec.mu, &spec), 0.063_493_635_934_240_97, 1e-12));

        let flat = SourceSpec::centered(1.0, 2.0).unwrap();
        assert!(close(gaussian_density(flat.mu, &flat), 0.159_154_943_091_895_35, 1e-12));

        let x = [1.0, 2.0, 0.0];
        // 1/(2 pi) * exp(-1/2), evaluated by hand
        assert!(close(gaussian_density(x, &flat), 0.096_532_352_630_053_9, 1e-12));
    }

    #[test]
    fn intensity_examples() {
        let zero = SourceSpec::centered(0.0, 1.0).unwrap();
        assert_eq!(source_intensity([0.3, -2.0, 0.0], &zero), 0.0);
        let half = SourceSpec::centered(0.5, 0.0).unwrap();
        assert!(close(source_intensity(half.mu, &half), 0.079_577_471_545_947_67, 1e-12));
    }

    #[test]
    fn sampling_is_deterministic_and_centered() {
        let ranges = SourceRanges::default();
        let a = sample_source_spec(&mut stream(11, Domain::SourceSampling, 0, 0), &ranges).unwrap();
        let b = sample_source_spec(&mut stream(11, Domain::SourceSampling, 0, 0), &ranges).unwrap();
        assert_eq!(a, b);

        let mut rng = stream(12, Domain::SourceSampling, 0, 0);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let s = sample_source_spec(&mut rng, &ranges).unwrap();
            assert!(s.energy_mev > 0.0 && s.energy_mev < 1.0);
            assert!((-9.0..=9.0).contains(&s.mu[1]));
            assert_eq!(s.mu[0], 0.0);
            assert_eq!(s.mu[2], 0.0);
            assert_eq!(s.sigma, [1.0, 1.0, 0.0]);
            sum += s.mu[1];
        }
        // U(-9, 9) has std 18/sqrt(12); 3 sigma / sqrt(n) is about 0.16
        assert!((sum / n as f64).abs() <= 0.5);
    }

    #[test]
    fn inverted_ranges_rejected() {
        let mut rng = stream(1, Domain::SourceSampling, 0, 0);
        let bad = SourceRanges {
            energy_mev: (1.0, 0.5),
            ..Default::default()
        };
        assert!(matches!(sample_source_spec(&mut rng, &bad), Err(Error::Config(_))));
        let bad = SourceRanges {
            mu_y: (3.0, -3.0),
            ..Default::default()
        };
        assert!(matches!(sample_source_spec(&mut rng, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn default_sensor_spacing() {
        let g = SensorGrid::default();
        let p = g.positions();
        assert_eq!(p.len(), 190);
        assert_eq!(p[0], -9.0);
        assert_eq!(p[189], 9.0);
        assert!(close(g.spacing(), 18.0 / 189.0, 1e-15));
        assert!((g.spacing() - 0.095).abs() < 5e-4);
    }

    #[test]
    fn symmetric_source_gives_symmetric_sensors() {
        let spec = SourceSpec::centered(0.7, 0.0).unwrap();
        let v = discretize_source(&spec, &SensorGrid::default(), 0).values;
        for i in 0..v.len() {
            assert!(close(v[i], v[v.len() - 1 - i], 1e-12));
        }
    }

    #[test]
    fn quadrature_integrates_to_one() {
        let spec = SourceSpec::new(1.0, [0.5, -1.5, 0.0], [1.3, 0.7, 0.0]).unwrap();
        let n = 1600;
        let (hx, hy) = (16.0 * 1.3 / n as f64, 16.0 * 0.7 / n as f64);
        let mut total = 0.0;
        for i in 0..n {
            let x = spec.mu[0] - 8.0 * 1.3 + (i as f64 + 0.5) * hx;
            for j in 0..n {
                let y = spec.mu[1] - 8.0 * 0.7 + (j as f64 + 0.5) * hy;
                total += gaussian_density([x, y, 0.0], &spec) * hx * hy;
            }
        }
        assert!(close(total, 1.0, 1e-6), "integral {total}");
    }

    proptest! {
        #[test]
        fn argmax_is_nearest_sensor(mu_y in -9.0f64..9.0, e in 0.01f64..1.0) {
            let spec = SourceSpec::centered(e, mu_y).unwrap();
            let grid = SensorGrid::default();
            let v = discretize_source(&spec, &grid, 0).values;
            let pos = grid.positions();
            let argmax = (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best });
            let nearest = (0..pos.len())
                .fold(0, |best, i| if (pos[i] - mu_y).abs() < (pos[best] - mu_y).abs() { i } else { best });
            // ties between two equidistant sensors are allowed
            prop_assert!((pos[argmax] - mu_y).abs() <= (pos[nearest] - mu_y).abs() + 1e-12);
        }

        #[test]
        fn intensity_is_linear_in_energy(e in 0.0f64..5.0, x in -5.0f64..5.0, y in -5.0f64..5.0, mu_y in -9.0f64..9.0) {
            let a = SourceSpec::centered(e, mu_y).unwrap();
            let b = SourceSpec::centered(2.0 * e, mu_y).unwrap();
            let p = [x, y, 0.0];
            prop_assert!((source_intensity(p, &b) - 2.0 * source_intensity(p, &a)).abs() <= 1e-15 * (1.0 + source_intensity(p, &b)));
        }

        #[test]
        fn sensor_vector_is_finite_nonnegative(count in 2usize..400, lo in -20.0f64..0.0, width in 0.1f64..40.0, mu_y in -9.0f64..9.0) {
            let grid = SensorGrid { axis: Axis::Y, count, lo, hi: lo + width };
            let spec = SourceSpec::centered(0.5, mu_y).unwrap();
            let v = discretize_source(&spec, &grid, 3);
            prop_assert_eq!(v.values.len(), count);
            prop_assert!(v.values.iter().all(|x| x.is_finite() && *x >= 0.0));
            let p = grid.positions();
            let h = grid.spacing();
            for w in p.windows(2) {
                prop_assert!(w[1] > w[0]);
                prop_assert!((w[1] - w[0] - h).abs() <= 1e-12);
            }
        }
    }
}
