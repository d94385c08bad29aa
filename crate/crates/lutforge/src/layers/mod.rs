//! Differentiable network layers: LUT-Dense, LUT-Conv, quantized matmul
//! dense for hybrid models, and fused batch-norm, composed into a
//! sequential model graph.

mod batchnorm;
mod lut_conv;
mod lut_dense;
mod model;
mod qdense;

pub use batchnorm::BatchNormState;
pub use lut_conv::{conv_out_dims, im2col_map, im2col_map_for, padding_amounts, LutConvLayer, Padding};
pub use lut_dense::{LutDenseCache, LutDenseLayer};
pub use model::{Layer, Model};
pub use qdense::QDenseLayer;

use serde::{Deserialize, Serialize};

/// Activation used inside the tiny MLPs realizing each table.
///
/// `Tanh` is the default; the others exist for dense-recovery constructions
/// and float baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "identity")]
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation *output*.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}
