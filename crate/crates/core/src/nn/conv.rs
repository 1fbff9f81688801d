//! Strided 1D convolution with "same"-style padding and tanh output.
//!
//! Output length is `ceil(len / stride)`; the padding needed to reach it is
//! split with the extra element on the right.

use ndarray::{Array1, Array3};
use rand::distr::{Distribution, Uniform};
use rand::Rng;

use super::{GradientBundle, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Conv1d {
    /// (out_channels, in_channels, kernel)
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    revision: u64,
}

impl PartialEq for Conv1d {
    fn eq(&self, o: &Self) -> bool {
        self.weight == o.weight && self.bias == o.bias && self.stride == o.stride
    }
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Array3<f64>,
    output: Array3<f64>,
    revision: u64,
}

impl ConvCache {
    pub fn output(&self) -> &Array3<f64> {
        &self.output
    }
}

pub fn same_output_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

impl Conv1d {
    /// Glorot-uniform with fan sizes `in * kernel` and `out * kernel`.
    pub fn init<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, rng: &mut R) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0 {
            return Err(Error::Config("convolution sizes must be positive".into()));
        }
        let bound = (6.0 / ((in_ch + out_ch) * kernel) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Ok(Conv1d {
            weight: Array3::from_shape_simple_fn((out_ch, in_ch, kernel), || dist.sample(rng)),
            bias: Array1::zeros(out_ch),
            stride,
            revision: 0,
        })
    }

    pub fn from_parts(weight: Array3<f64>, bias: Array1<f64>, stride: usize) -> Result<Self> {
        if bias.len() != weight.dim().0 || stride == 0 {
            return Err(Error::Shape("convolution bias/stride inconsistent with weight".into()));
        }
        Ok(Conv1d {
            weight: weight.as_standard_layout().to_owned(),
            bias,
            stride,
            revision: 0,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel(&self) -> usize {
        self.weight.dim().2
    }

    pub fn output_len(&self, len: usize) -> usize {
        same_output_len(len, self.stride)
    }

    fn pad_left(&self, len: usize) -> usize {
        let out = self.output_len(len);
        let total = ((out - 1) * self.stride + self.kernel()).saturating_sub(len);
        total / 2
    }

    /// Input `(batch, in_channels, len)` to output `(batch, out_channels, ceil(len/stride))`.
    pub fn forward(&self, input: &Array3<f64>) -> Result<(Array3<f64>, ConvCache)> {
        let (batch, cin, len) = input.dim();
        if cin != self.in_channels() {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {cin}",
                self.in_channels()
            )));
        }
        let out_len = self.output_len(len);
        let pad = self.pad_left(len) as isize;
        let k = self.kernel();
        let mut out = Array3::zeros((batch, self.out_channels(), out_len));
        for b in 0..batch {
            for co in 0..self.out_channels() {
                for t in 0..out_len {
                    let start = (t * self.stride) as isize - pad;
                    let mut acc = self.bias[co];
                    for ci in 0..cin {
                        for j in 0..k {
                            let idx = start + j as isize;
                            if idx >= 0 && (idx as usize) < len {
                                acc += self.weight[[co, ci, j]] * input[[b, ci, idx as usize]];
                            }
                        }
                    }
                    out[[b, co, t]] = acc.tanh();
                }
            }
        }
        let cache = ConvCache {
            input: input.to_owned(),
            output: out.clone(),
            revision: self.revision,
        };
        Ok((out, cache))
    }

    pub fn backward(&self, cache: &ConvCache, output_grad: &Array3<f64>) -> Result<(GradientBundle, Array3<f64>)> {
        if cache.revision != self.revision {
            return Err(Error::Shape("stale convolution cache".into()));
        }
        if output_grad.dim() != cache.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                output_grad.dim(),
                cache.output.dim()
            )));
        }
        let (batch, cin, len) = cache.input.dim();
        let out_len = cache.output.dim().2;
        let pad = self.pad_left(len) as isize;
        let k = self.kernel();
        let mut dw = Array3::<f64>::zeros(self.weight.dim());
        let mut db = Array1::<f64>::zeros(self.out_channels());
        let mut dx = Array3::<f64>::zeros(cache.input.dim());
        for b in 0..batch {
            for co in 0..self.out_channels() {
                for t in 0..out_len {
                    let y = cache.output[[b, co, t]];
                    let dz = output_grad[[b, co, t]] * (1.0 - y * y);
                    if dz == 0.0 {
                        continue;
                    }
                    db[co] += dz;
                    let start = (t * self.stride) as isize - pad;
                    for ci in 0..cin {
                        for j in 0..k {
                            let idx = start + j as isize;
                            if idx >= 0 && (idx as usize) < len {
                                dw[[co, ci, j]] += dz * cache.input[[b, ci, idx as usize]];
                                dx[[b, ci, idx as usize]] += dz * self.weight[[co, ci, j]];
                            }
                        }
                    }
                }
            }
        }
        Ok((
            GradientBundle {
                tensors: vec![dw.into_iter().collect(), db.to_vec()],
            },
            dx,
        ))
    }
}

impl ParamSet for Conv1d {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.revision += 1;
        vec![
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}
