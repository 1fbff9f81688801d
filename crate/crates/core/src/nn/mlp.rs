use ndarray::{Array1, Array2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{GradientBundle, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

/// tanh through a single `exp`. Absolute error stays within a few ulps of 1.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

impl Activation {
    pub fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
        }
    }

    /// Multiply `grad` in place by the derivative, expressed through the
    /// activation's output.
    pub fn backprop(self, out: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Tanh => grad.zip_mut_with(out, |g, &a| *g *= 1.0 - a * a),
            Activation::Relu => grad.zip_mut_with(out, |g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Identity => {}
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Affine layer `y = x W + b` with `W` stored input-major (in x out).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MLPParams {
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<Dense>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    revision: u64,
}

// The revision counter is bookkeeping, not part of the value.
impl PartialEq for MLPParams {
    fn eq(&self, o: &Self) -> bool {
        self.layer_sizes == o.layer_sizes
            && self.layers == o.layers
            && self.hidden_activation == o.hidden_activation
            && self.output_activation == o.output_activation
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Array2<f64>>,
    revision: u64,
    layer_sizes: Vec<usize>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &Array2<f64> {
        &self.acts[0]
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(
    layer_sizes: &[usize],
    hidden_activation: Activation,
    output_activation: Activation,
    rng: &mut R,
) -> Result<MLPParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "a network needs at least an input and an output size, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!("zero-width layer in {layer_sizes:?}")));
    }
    let layers = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = glorot_bound(fan_in, fan_out);
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            Dense {
                weight: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MLPParams {
        layer_sizes: layer_sizes.to_vec(),
        layers,
        hidden_activation,
        output_activation,
        revision: 0,
    })
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl MLPParams {
    /// Rebuild from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense>, hidden_activation: Activation, output_activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        let mut sizes = vec![layers[0].weight.nrows()];
        for (i, l) in layers.iter().enumerate() {
            if l.weight.nrows() != *sizes.last().unwrap() || l.bias.len() != l.weight.ncols() {
                return Err(Error::Shape(format!("layer {i} does not chain: {:?}", l.weight.dim())));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("layer {i} has non-finite parameters")));
            }
            sizes.push(l.weight.ncols());
        }
        Ok(MLPParams {
            layer_sizes: sizes,
            layers,
            hidden_activation,
            output_activation,
            revision: 0,
        })
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Forward pass over a batch (rows are samples).
    pub fn forward(&self, input: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input width {} does not match network input {}",
                input.ncols(),
                self.input_width()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_owned());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].dot(&layer.weight);
            z += &layer.bias;
            self.activation(l).apply(&mut z);
            acts.push(z);
        }
        let out = acts.last().unwrap().clone();
        Ok((
            out,
            ForwardCache {
                acts,
                revision: self.revision,
                layer_sizes: self.layer_sizes.clone(),
            },
        ))
    }

    /// Output only, no cache.
    pub fn predict(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "input width {} does not match network input {}",
                input.ncols(),
                self.input_width()
            )));
        }
        let mut a = input.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            self.activation(l).apply(&mut z);
            a = z;
        }
        Ok(a)
    }

    /// Reverse-mode gradients of the forward map contracted with
    /// `output_grad`. Returns the parameter gradients and the gradient with
    /// respect to the input batch.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Array2<f64>) -> Result<(GradientBundle, Array2<f64>)> {
        if cache.revision != self.revision || cache.layer_sizes != self.layer_sizes {
            return Err(Error::Shape(
                "forward cache is stale or belongs to a different network".into(),
            ));
        }
        if output_grad.dim() != cache.output().dim() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                output_grad.dim(),
                cache.output().dim()
            )));
        }
        let n = self.layers.len();
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); 2 * n];
        let mut delta = output_grad.to_owned();
        for l in (0..n).rev() {
            self.activation(l).backprop(&cache.acts[l + 1], &mut delta);
            let dw = cache.acts[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[l].weight.t());
            grads[2 * l] = dw.into_iter().collect();
            grads[2 * l + 1] = db.to_vec();
            delta = next;
        }
        Ok((GradientBundle { tensors: grads }, delta))
    }
}

impl ParamSet for MLPParams {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.revision += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }
}
