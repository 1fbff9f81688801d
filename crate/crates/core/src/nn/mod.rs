//! A small dense-network engine: fully connected stacks, a strided 1D
//! convolution, exact reverse-mode gradients, and Adam.
//!
//! All parameter containers implement [`ParamSet`], a flat list of `f64`
//! tensors in a fixed order. Gradients ([`GradientBundle`]), optimizer
//! moments and finite-difference probes all index into that same order.

pub mod adam;
pub mod conv;
pub mod gradcheck;
pub mod loss;
pub mod mlp;

pub use adam::AdamState;
pub use conv::{Conv1d, ConvCache};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use loss::{mean_l2_relative_error, mean_l2_relative_error_grad, mse, mse_grad};
pub use mlp::{init_params, Activation, Dense, ForwardCache, MLPParams};

use crate::error::{Error, Result};

/// Ordered view of every trainable tensor.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;

    /// Mutable view; implementations invalidate forward caches taken before
    /// the call.
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn tensor_shapes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    fn param_count(&self) -> usize {
        self.tensor_shapes().iter().sum()
    }
}

/// Gradients mirroring a [`ParamSet`]'s tensor order and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub tensors: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn zeros_like<P: ParamSet + ?Sized>(params: &P) -> Self {
        GradientBundle {
            tensors: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn concat(parts: impl IntoIterator<Item = GradientBundle>) -> Self {
        GradientBundle {
            tensors: parts.into_iter().flat_map(|g| g.tensors).collect(),
        }
    }

    pub fn check_shapes<P: ParamSet + ?Sized>(&self, params: &P) -> Result<()> {
        let shapes = params.tensor_shapes();
        let mine: Vec<usize> = self.tensors.iter().map(Vec::len).collect();
        if shapes != mine {
            return Err(Error::Shape(format!(
                "gradient tensors {mine:?} do not mirror parameters {shapes:?}"
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }
}
