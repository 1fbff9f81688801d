//! Point-regression baselines.
//!
//! The FCN maps a coordinate to flux for one fixed source function. The CNN
//! encodes the sensor vector with two strided convolutions and regresses
//! flux from the encoding plus the coordinate.

use ndarray::{s, Array2};
use rand::Rng;

use super::SurrogateModel;
use crate::dataset::NormMeta;
use crate::error::{Error, Result};
use crate::nn::conv::same_output_len;
use crate::nn::{init_params, Activation, Conv1d, ConvCache, ForwardCache, GradientBundle, MLPParams, ParamSet};

pub const FCN_SIZES: [usize; 5] = [2, 64, 64, 64, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct FcnBaseline {
    pub net: MLPParams,
    pub norm: NormMeta,
    /// The single function this network was fitted to.
    pub spec_id: u32,
}

impl FcnBaseline {
    pub fn init<R: Rng + ?Sized>(norm: NormMeta, spec_id: u32, rng: &mut R) -> Result<Self> {
        Ok(FcnBaseline {
            net: init_params(&FCN_SIZES, Activation::Tanh, Activation::Identity, rng)?,
            norm,
            spec_id,
        })
    }
}

impl SurrogateModel for FcnBaseline {
    fn name(&self) -> &'static str {
        "FCN"
    }

    fn norm(&self) -> &NormMeta {
        &self.norm
    }

    /// The sensors are ignored: the network only knows its own function.
    fn predict_normalized(&self, _sensors_raw: &[f64], coords: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(self.net.predict(coords)?.into_iter().collect())
    }
}

impl ParamSet for FcnBaseline {
    fn tensors(&self) -> Vec<&[f64]> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

pub const CNN_KERNEL: usize = 5;
pub const CNN_STRIDE: usize = 2;
pub const CNN_CHANNELS: [usize; 2] = [8, 16];
pub const CNN_HEAD_HIDDEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct CnnBaseline {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    /// `[flattened + 2, 64, 1]`
    pub head: MLPParams,
    pub norm: NormMeta,
}

#[derive(Debug, Clone)]
pub struct CnnCache {
    c1: ConvCache,
    c2: ConvCache,
    head: ForwardCache,
    groups: Vec<usize>,
}

/// Per-layer conv output lengths for `m` sensors.
pub fn cnn_lengths(m: usize) -> [usize; 2] {
    let l1 = same_output_len(m, CNN_STRIDE);
    [l1, same_output_len(l1, CNN_STRIDE)]
}

impl CnnBaseline {
    pub fn init<R: Rng + ?Sized>(norm: NormMeta, rng: &mut R) -> Result<Self> {
        let m = norm.sensors();
        let conv1 = Conv1d::init(1, CNN_CHANNELS[0], CNN_KERNEL, CNN_STRIDE, rng)?;
        let conv2 = Conv1d::init(CNN_CHANNELS[0], CNN_CHANNELS[1], CNN_KERNEL, CNN_STRIDE, rng)?;
        let flat = CNN_CHANNELS[1] * cnn_lengths(m)[1];
        let head = init_params(&[flat + 2, CNN_HEAD_HIDDEN, 1], Activation::Tanh, Activation::Identity, rng)?;
        Self::from_parts(conv1, conv2, head, norm)
    }

    pub fn from_parts(conv1: Conv1d, conv2: Conv1d, head: MLPParams, norm: NormMeta) -> Result<Self> {
        let flat = conv2.out_channels() * cnn_lengths(norm.sensors())[1];
        if conv1.in_channels() != 1 || conv2.in_channels() != conv1.out_channels() || head.input_width() != flat + 2 {
            return Err(Error::Shape("CNN layers do not chain".into()));
        }
        Ok(CnnBaseline {
            conv1,
            conv2,
            head,
            norm,
        })
    }

    pub fn flat_width(&self) -> usize {
        self.head.input_width() - 2
    }

    /// Function-major forward: one normalized sensor row per function, the
    /// encoding is computed once per function and shared by its points.
    pub fn forward_batch(
        &self,
        sensors: &Array2<f64>,
        coords: &Array2<f64>,
        groups: &[usize],
    ) -> Result<(Vec<f64>, CnnCache)> {
        let (f, m) = sensors.dim();
        if m != self.norm.sensors() {
            return Err(Error::Shape(format!("{m} sensors, CNN expects {}", self.norm.sensors())));
        }
        if groups.len() != coords.nrows() || groups.iter().any(|&g| g >= f) || coords.ncols() != 2 {
            return Err(Error::Shape("CNN batch groups/coordinates inconsistent".into()));
        }
        let x = sensors
            .to_owned()
            .into_shape_with_order((f, 1, m))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (h1, c1) = self.conv1.forward(&x)?;
        let (h2, c2) = self.conv2.forward(&h1)?;
        let flat = self.flat_width();
        let enc = h2
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((f, flat))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let mut head_in = Array2::zeros((coords.nrows(), flat + 2));
        for (i, &g) in groups.iter().enumerate() {
            head_in.slice_mut(s![i, ..flat]).assign(&enc.row(g));
            head_in[[i, flat]] = coords[[i, 0]];
            head_in[[i, flat + 1]] = coords[[i, 1]];
        }
        let (out, hc) = self.head.forward(&head_in)?;
        Ok((
            out.into_iter().collect(),
            CnnCache {
                c1,
                c2,
                head: hc,
                groups: groups.to_vec(),
            },
        ))
    }

    pub fn backward_batch(&self, cache: &CnnCache, pred_grad: &[f64]) -> Result<GradientBundle> {
        if pred_grad.len() != cache.groups.len() {
            return Err(Error::Shape("prediction gradient length differs from batch".into()));
        }
        let dout = Array2::from_shape_vec((pred_grad.len(), 1), pred_grad.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (gh, dhead_in) = self.head.backward(&cache.head, &dout)?;
        let flat = self.flat_width();
        let (f, ch, len) = cache.c2.output().dim();
        let mut denc = Array2::<f64>::zeros((f, flat));
        for (i, &g) in cache.groups.iter().enumerate() {
            let mut row = denc.row_mut(g);
            row += &dhead_in.slice(s![i, ..flat]);
        }
        let denc = denc
            .into_shape_with_order((f, ch, len))
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (g2, dh1) = self.conv2.backward(&cache.c2, &denc)?;
        let (g1, _) = self.conv1.backward(&cache.c1, &dh1)?;
        Ok(GradientBundle::concat([g1, g2, gh]))
    }
}

impl SurrogateModel for CnnBaseline {
    fn name(&self) -> &'static str {
        "CNN"
    }

    fn norm(&self) -> &NormMeta {
        &self.norm
    }

    fn predict_normalized(&self, sensors_raw: &[f64], coords: &Array2<f64>) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, sensors_raw.len()), self.norm.normalize_sensors(sensors_raw)?)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let groups = vec![0; coords.nrows()];
        Ok(self.forward_batch(&row, coords, &groups)?.0)
    }
}

impl ParamSet for CnnBaseline {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.conv1.tensors();
        v.extend(self.conv2.tensors());
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.conv1.tensors_mut();
        v.extend(self.conv2.tensors_mut());
        v.extend(self.head.tensors_mut());
        v
    }
}

