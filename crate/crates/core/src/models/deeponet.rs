//! Branch/trunk operator network: `G(u)(y) ≈ <g(u), f(y)> + b`.

use ndarray::Array2;
use rand::Rng;

use super::SurrogateModel;
use crate::dataset::NormMeta;
use crate::error::{Error, Result};
use crate::nn::{init_params, Activation, ForwardCache, GradientBundle, MLPParams, ParamSet};
use crate::transport::TallyGrid;

/// Width of the branch/trunk feature space.
pub const LATENT_WIDTH: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepONet {
    pub branch: MLPParams,
    pub trunk: MLPParams,
    pub output_bias: f64,
    pub norm: NormMeta,
}

/// Forward intermediates for a function-major batch.
#[derive(Debug, Clone)]
pub struct DeepONetCache {
    branch: ForwardCache,
    trunk: ForwardCache,
    /// `(branch row, trunk row)` of every prediction.
    pairs: Vec<(usize, usize)>,
}

impl DeepONet {
    /// Branch `[m, 80, 80]`, trunk `[2, 80, 80]`, tanh hidden layers and
    /// linear outputs.
    pub fn init<R: Rng + ?Sized>(norm: NormMeta, rng: &mut R) -> Result<Self> {
        let m = norm.sensors();
        Self::with_sizes(&[m, LATENT_WIDTH, LATENT_WIDTH], &[2, LATENT_WIDTH, LATENT_WIDTH], norm, rng)
    }

    pub fn with_sizes<R: Rng + ?Sized>(branch: &[usize], trunk: &[usize], norm: NormMeta, rng: &mut R) -> Result<Self> {
        let branch = init_params(branch, Activation::Tanh, Activation::Identity, rng)?;
        let trunk = init_params(trunk, Activation::Tanh, Activation::Identity, rng)?;
        Self::from_parts(branch, trunk, 0.0, norm)
    }

    pub fn from_parts(branch: MLPParams, trunk: MLPParams, output_bias: f64, norm: NormMeta) -> Result<Self> {
        if branch.output_width() != trunk.output_width() {
            return Err(Error::Shape(format!(
                "branch width {} differs from trunk width {}",
                branch.output_width(),
                trunk.output_width()
            )));
        }
        if trunk.input_width() != 2 {
            return Err(Error::Shape("trunk must take (x, y)".into()));
        }
        if branch.input_width() != norm.sensors() {
            return Err(Error::Shape(format!(
                "branch takes {} sensors, normalization describes {}",
                branch.input_width(),
                norm.sensors()
            )));
        }
        Ok(DeepONet {
            branch,
            trunk,
            output_bias,
            norm,
        })
    }

    pub fn latent_width(&self) -> usize {
        self.branch.output_width()
    }

    fn combine(&self, b: &Array2<f64>, t: &Array2<f64>, pairs: &[(usize, usize)]) -> Vec<f64> {
        pairs
            .iter()
            .map(|&(g, r)| b.row(g).dot(&t.row(r)) + self.output_bias)
            .collect()
    }

    /// `branch_in`: one normalized sensor row per function; `trunk_in`:
    /// normalized coordinates; `groups[i]` is the function row of trunk row `i`.
    pub fn forward_batch(
        &self,
        branch_in: &Array2<f64>,
        trunk_in: &Array2<f64>,
        groups: &[usize],
    ) -> Result<(Vec<f64>, DeepONetCache)> {
        if groups.len() != trunk_in.nrows() {
            return Err(Error::Shape("one group index per trunk row required".into()));
        }
        let pairs: Vec<(usize, usize)> = groups.iter().copied().zip(0..).collect();
        self.forward_pairs(branch_in, trunk_in, &pairs)
    }

    /// Predictions for arbitrary `(branch row, trunk row)` pairs. Each branch
    /// and trunk row is evaluated once however many pairs use it.
    pub fn forward_pairs(
        &self,
        branch_in: &Array2<f64>,
        trunk_in: &Array2<f64>,
        pairs: &[(usize, usize)],
    ) -> Result<(Vec<f64>, DeepONetCache)> {
        if pairs
            .iter()
            .any(|&(g, r)| g >= branch_in.nrows() || r >= trunk_in.nrows())
        {
            return Err(Error::Shape("pair index does not match batch rows".into()));
        }
        let (b, bc) = self.branch.forward(branch_in)?;
        let (t, tc) = self.trunk.forward(trunk_in)?;
        let pred = self.combine(&b, &t, pairs);
        Ok((
            pred,
            DeepONetCache {
                branch: bc,
                trunk: tc,
                pairs: pairs.to_vec(),
            },
        ))
    }

    /// Gradients in [`ParamSet`] order: branch, trunk, output bias.
    pub fn backward_batch(&self, cache: &DeepONetCache, pred_grad: &[f64]) -> Result<GradientBundle> {
        if pred_grad.len() != cache.pairs.len() {
            return Err(Error::Shape("prediction gradient length differs from batch".into()));
        }
        let b = cache.branch.output();
        let t = cache.trunk.output();
        let mut db = Array2::<f64>::zeros(b.dim());
        let mut dt = Array2::<f64>::zeros(t.dim());
        for (&(g, r), &d) in cache.pairs.iter().zip(pred_grad) {
            if d == 0.0 {
                continue;
            }
            db.row_mut(g).scaled_add(d, &t.row(r));
            dt.row_mut(r).scaled_add(d, &b.row(g));
        }
        let (gb, _) = self.branch.backward(&cache.branch, &db)?;
        let (gt, _) = self.trunk.backward(&cache.trunk, &dt)?;
        let dbias = GradientBundle {
            tensors: vec![vec![pred_grad.iter().sum()]],
        };
        Ok(GradientBundle::concat([gb, gt, dbias]))
    }

    /// Branch features of one normalized sensor vector.
    pub fn branch_features(&self, sensors_normalized: &[f64]) -> Result<Array2<f64>> {
        let row = Array2::from_shape_vec((1, sensors_normalized.len()), sensors_normalized.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        self.branch.predict(&row)
    }

    /// Scale every trunk feature, for probing the linear readout.
    pub fn predict_with_trunk_scale(&self, sensors_raw: &[f64], coords: &Array2<f64>, scale: f64) -> Result<Vec<f64>> {
        let b = self.branch_features(&self.norm.normalize_sensors(sensors_raw)?)?;
        let t = self.trunk.predict(coords)?;
        let out = t.dot(&b.row(0)) * scale + self.output_bias;
        Ok(out.to_vec())
    }
}

/// Predictions in normalized target space for one function. The branch runs
/// once and is reused for every trunk point.
pub fn deeponet_predict(model: &DeepONet, branch_input: &[f64], trunk_points: &Array2<f64>) -> Result<Vec<f64>> {
    if branch_input.len() != model.branch.input_width() {
        return Err(Error::Shape(format!(
            "{} sensor values, model expects {}",
            branch_input.len(),
            model.branch.input_width()
        )));
    }
    model.predict_with_trunk_scale(branch_input, trunk_points, 1.0)
}

impl SurrogateModel for DeepONet {
    fn name(&self) -> &'static str {
        "DeepONet"
    }

    fn norm(&self) -> &NormMeta {
        &self.norm
    }

    fn predict_normalized(&self, sensors_raw: &[f64], coords: &Array2<f64>) -> Result<Vec<f64>> {
        deeponet_predict(self, sensors_raw, coords)
    }

    /// The trunk features of the grid do not depend on the source, so they
    /// are computed once and shared by every function in the call.
    fn predict_fields(&self, sensors_raw: &[&[f64]], grid: &TallyGrid) -> Result<Vec<Vec<f64>>> {
        let m = self.norm.sensors();
        let mut rows = Array2::zeros((sensors_raw.len(), m));
        for (mut row, s) in rows.rows_mut().into_iter().zip(sensors_raw) {
            row.assign(&ndarray::ArrayView1::from(&self.norm.normalize_sensors(s)?));
        }
        let b = self.branch.predict(&rows)?;
        let t = self.trunk.predict(&self.norm.grid_coords(grid))?;
        let out = b.dot(&t.t());
        Ok(out
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|&v| self.norm.inverse_target(v + self.output_bias)).collect())
            .collect())
    }
}

impl ParamSet for DeepONet {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.branch.tensors();
        v.extend(self.trunk.tensors());
        v.push(std::slice::from_ref(&self.output_bias));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.branch.tensors_mut();
        v.extend(self.trunk.tensors_mut());
        v.push(std::slice::from_mut(&mut self.output_bias));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TARGET_FLOOR;
    use crate::nn::Dense;
    use crate::rng::{stream, Domain};
    use ndarray::{array, Array1};

    fn identity_norm(m: usize) -> NormMeta {
        NormMeta {
            sensor_mean: vec![0.0; m],
            sensor_std: vec![1.0; m],
            target_floor: TARGET_FLOOR,
            target_mean: 0.0,
            target_std: 1.0,
            coord_min: [-1.0, -1.0],
            coord_max: [1.0, 1.0],
        }
    }

    fn small(seed: u64) -> DeepONet {
        DeepONet::with_sizes(&[6, 7, 5], &[2, 7, 5], identity_norm(6), &mut stream(seed, Domain::Init, 0, 0)).unwrap()
    }

    fn coords(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 2), |(i, j)| ((i * 3 + j * 5) as f64 * 0.37).sin())
    }

    #[test]
    fn zero_branch_features_give_the_bias() {
        let mut m = small(1);
        m.output_bias = 0.75;
        let last = m.branch.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        let p = deeponet_predict(&m, &[0.3; 6], &coords(9)).unwrap();
        assert!(p.iter().all(|&v| v == 0.75));
    }

    #[test]
    fn scalar_dot_product() {
        let branch = MLPParams::from_layers(
            vec![Dense { weight: array![[0.0]], bias: Array1::from(vec![2.0]) }],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap();
        let trunk = MLPParams::from_layers(
            vec![Dense { weight: array![[0.0], [0.0]], bias: Array1::from(vec![3.0]) }],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap();
        let m = DeepONet::from_parts(branch, trunk, 0.0, identity_norm(1)).unwrap();
        assert_eq!(deeponet_predict(&m, &[0.5], &array![[0.1, -0.4]]).unwrap(), vec![6.0]);
    }

    #[test]
    fn batched_trunk_matches_per_point() {
        let m = small(2);
        let u = [0.2, -0.1, 0.7, 0.0, 1.3, -0.6];
        let c = coords(17);
        let batch = deeponet_predict(&m, &u, &c).unwrap();
        for (i, b) in batch.iter().enumerate() {
            let one = deeponet_predict(&m, &u, &c.slice(ndarray::s![i..i + 1, ..]).to_owned()).unwrap();
            assert!((b - one[0]).abs() <= 1e-12);
        }
        let groups = vec![0; c.nrows()];
        let row = Array2::from_shape_vec((1, 6), u.to_vec()).unwrap();
        let (fwd, _) = m.forward_batch(&row, &c, &groups).unwrap();
        for (a, b) in fwd.iter().zip(&batch) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn readout_is_linear_in_trunk_features() {
        let mut m = small(3);
        m.output_bias = -0.4;
        let u = [0.1; 6];
        let c = coords(8);
        let base = m.predict_with_trunk_scale(&u, &c, 1.0).unwrap();
        for scale in [0.0, 2.5, -3.0] {
            let s = m.predict_with_trunk_scale(&u, &c, scale).unwrap();
            for (a, b) in s.iter().zip(&base) {
                assert!(((a - m.output_bias) - scale * (b - m.output_bias)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn depends_only_on_sensor_values() {
        let m = small(4);
        let u = [0.5, 0.4, -0.2, 0.9, 0.0, 0.1];
        let c = coords(5);
        assert_eq!(deeponet_predict(&m, &u, &c).unwrap(), deeponet_predict(&m, &u, &c).unwrap());
        assert_ne!(deeponet_predict(&m, &u, &c).unwrap(), deeponet_predict(&m, &[0.0; 6], &c).unwrap());
        assert!(matches!(deeponet_predict(&m, &u[..5], &c), Err(Error::Shape(_))));
    }

    #[test]
    fn many_fields_match_one_at_a_time() {
        let m = small(5);
        let grid = TallyGrid::with_cells(4, 3);
        let a = [0.3, 0.1, -0.2, 0.5, 0.0, 0.9];
        let b = [-0.7, 0.2, 0.4, 0.1, 0.3, -0.5];
        let both = m.predict_fields(&[&a, &b], &grid).unwrap();
        for (u, f) in [a, b].iter().zip(&both) {
            let one = m.predict_field(u, &grid).unwrap();
            assert_eq!(one.len(), grid.cells());
            for (x, y) in one.iter().zip(f) {
                assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mismatched_widths_are_rejected() {
        let mut r = stream(6, Domain::Init, 0, 0);
        assert!(DeepONet::with_sizes(&[6, 4], &[2, 5], identity_norm(6), &mut r).is_err());
        assert!(DeepONet::with_sizes(&[5, 4], &[2, 4], identity_norm(6), &mut r).is_err());
    }
}
