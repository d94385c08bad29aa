//! LUT-Conv: patch extraction (im2col) feeding a LUT-Dense layer, for 1-D
//! and 2-D spatial inputs with channels-last layout.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, LutDenseCache, LutDenseLayer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    #[serde(rename = "valid")]
    Valid,
    #[serde(rename = "same")]
    Same,
}

/// Output spatial dims for the given convolution geometry.
pub fn conv_out_dims(
    in_spatial: &[usize],
    kernel: &[usize],
    stride: &[usize],
    padding: Padding,
) -> Result<Vec<usize>> {
    if kernel.len() != in_spatial.len() || stride.len() != in_spatial.len() {
        return Err(Error::Shape(format!(
            "kernel rank {} / stride rank {} vs input rank {}",
            kernel.len(),
            stride.len(),
            in_spatial.len()
        )));
    }
    let mut out = Vec::with_capacity(in_spatial.len());
    for d in 0..in_spatial.len() {
        if kernel[d] == 0 || stride[d] == 0 {
            return Err(Error::Shape("zero kernel or stride".into()));
        }
        match padding {
            Padding::Valid => {
                if kernel[d] > in_spatial[d] {
                    return Err(Error::Shape(format!(
                        "kernel {} larger than input {} on axis {}",
                        kernel[d], in_spatial[d], d
                    )));
                }
                out.push((in_spatial[d] - kernel[d]) / stride[d] + 1);
            }
            Padding::Same => out.push(in_spatial[d].div_ceil(stride[d])),
        }
    }
    Ok(out)
}

/// `(before, after)` zero padding per spatial axis.
pub fn padding_amounts(
    in_spatial: &[usize],
    kernel: &[usize],
    stride: &[usize],
    padding: Padding,
) -> Result<Vec<(usize, usize)>> {
    let out = conv_out_dims(in_spatial, kernel, stride, padding)?;
    Ok(match padding {
        Padding::Valid => vec![(0, 0); in_spatial.len()],
        Padding::Same => (0..in_spatial.len())
            .map(|d| {
                let total =
                    ((out[d] - 1) * stride[d] + kernel[d]).saturating_sub(in_spatial[d]);
                (total / 2, total - total / 2)
            })
            .collect(),
    })
}

/// The canonical patch enumeration shared by training, exact eval and
/// lowering: for every output position (row-major) the flat input-feature
/// index of each patch entry, `None` for padding zeros.
///
/// Patch entries are ordered kernel-offsets-major, channels-minor; input
/// features are flattened row-major over `(spatial..., channels)`.
pub fn im2col_map(
    in_spatial: &[usize],
    channels: usize,
    kernel: &[usize],
    stride: &[usize],
    padding: Padding,
) -> Result<(Vec<usize>, Vec<Vec<Option<usize>>>)> {
    let out_dims = conv_out_dims(in_spatial, kernel, stride, padding)?;
    let pads = padding_amounts(in_spatial, kernel, stride, padding)?;
    let rank = in_spatial.len();
    let positions: usize = out_dims.iter().product();
    let k_vol: usize = kernel.iter().product();

    let unflatten = |mut idx: usize, dims: &[usize]| -> Vec<usize> {
        let mut m = vec![0; dims.len()];
        for d in (0..dims.len()).rev() {
            m[d] = idx % dims[d];
            idx /= dims[d];
        }
        m
    };

    let mut map = Vec::with_capacity(positions);
    for p in 0..positions {
        let pos = unflatten(p, &out_dims);
        let mut entries = Vec::with_capacity(k_vol * channels);
        for ko in 0..k_vol {
            let off = unflatten(ko, kernel);
            let mut src_flat = Some(0usize);
            let mut mult = 1usize;
            for d in (0..rank).rev() {
                let s = pos[d] * stride[d] + off[d];
                let s = s as isize - pads[d].0 as isize;
                if s < 0 || s >= in_spatial[d] as isize {
                    src_flat = None;
                    break;
                }
                if let Some(acc) = src_flat {
                    src_flat = Some(acc + s as usize * mult);
                }
                mult *= in_spatial[d];
            }
            for c in 0..channels {
                entries.push(src_flat.map(|s| s * channels + c));
            }
        }
        map.push(entries);
    }
    Ok((out_dims, map))
}

/// Patch map for a conv layer over the given input spatial dims.
pub fn im2col_map_for(
    layer: &LutConvLayer,
    in_spatial: &[usize],
) -> Result<(Vec<usize>, Vec<Vec<Option<usize>>>)> {
    im2col_map(in_spatial, layer.channels_in, &layer.kernel, &layer.stride, layer.padding)
}

/// A convolution layer whose kernel is a grid of learned lookup tables.
#[derive(Debug, Clone)]
pub struct LutConvLayer {
    pub kernel: Vec<usize>,
    pub stride: Vec<usize>,
    pub padding: Padding,
    pub channels_in: usize,
    pub inner: LutDenseLayer,
}

pub struct LutConvCache {
    pub inner: LutDenseCache,
    pub map: Vec<Vec<Option<usize>>>,
    pub in_features: usize,
    pub batch: usize,
}

impl LutConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        kernel: Vec<usize>,
        stride: Vec<usize>,
        padding: Padding,
        channels_in: usize,
        c_out: usize,
        hidden: usize,
        activation: Activation,
        batchnorm: bool,
        rng: &mut R,
    ) -> Self {
        let k_vol: usize = kernel.iter().product();
        let inner =
            LutDenseLayer::new(k_vol * channels_in, c_out, hidden, activation, batchnorm, rng);
        Self { kernel, stride, padding, channels_in, inner }
    }

    /// `in_shape` is `(spatial..., channels)`; returns `(out_spatial..., c_out)`.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<Vec<usize>> {
        if in_shape.len() != self.kernel.len() + 1 {
            return Err(Error::Shape(format!(
                "conv expects rank {} input (spatial + channels), got {:?}",
                self.kernel.len() + 1,
                in_shape
            )));
        }
        let (spatial, ch) = in_shape.split_at(in_shape.len() - 1);
        if ch[0] != self.channels_in {
            return Err(Error::Shape(format!(
                "conv expects {} channels, got {}",
                self.channels_in, ch[0]
            )));
        }
        let mut out = conv_out_dims(spatial, &self.kernel, &self.stride, self.padding)?;
        out.push(self.inner.c_out);
        Ok(out)
    }

    pub fn positions(&self, in_shape: &[usize]) -> Result<usize> {
        let out = self.out_shape(in_shape)?;
        Ok(out[..out.len() - 1].iter().product())
    }

    /// Batched forward on flattened features; `in_shape` gives the logical
    /// per-sample layout.
    pub fn forward(
        &mut self,
        x: ArrayView2<f64>,
        in_shape: &[usize],
        training: bool,
    ) -> Result<(Array2<f64>, LutConvCache)> {
        let batch = x.dim().0;
        let in_features: usize = in_shape.iter().product();
        if x.dim().1 != in_features {
            return Err(Error::Shape(format!(
                "conv input has {} features, shape {:?} wants {}",
                x.dim().1,
                in_shape,
                in_features
            )));
        }
        let (spatial, _) = in_shape.split_at(in_shape.len() - 1);
        let (_, map) =
            im2col_map(spatial, self.channels_in, &self.kernel, &self.stride, self.padding)?;
        let positions = map.len();
        let patch_len = self.inner.c_in;

        let mut patches = Array2::zeros((batch * positions, patch_len));
        for b in 0..batch {
            for (p, entries) in map.iter().enumerate() {
                for (t, src) in entries.iter().enumerate() {
                    if let Some(s) = src {
                        patches[[b * positions + p, t]] = x[[b, *s]];
                    }
                }
            }
        }

        let (inner_out, inner_cache) = self.inner.forward(patches.view(), training)?;
        let c_out = self.inner.c_out;
        let mut out = Array2::zeros((batch, positions * c_out));
        for b in 0..batch {
            for p in 0..positions {
                for i in 0..c_out {
                    out[[b, p * c_out + i]] = inner_out[[b * positions + p, i]];
                }
            }
        }
        Ok((out, LutConvCache { inner: inner_cache, map, in_features, batch }))
    }

    pub fn backward(&self, cache: &LutConvCache, d_out: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let positions = cache.map.len();
        let c_out = self.inner.c_out;
        let batch = cache.batch;

        let mut d_inner = Array2::zeros((batch * positions, c_out));
        for b in 0..batch {
            for p in 0..positions {
                for i in 0..c_out {
                    d_inner[[b * positions + p, i]] = d_out[[b, p * c_out + i]];
                }
            }
        }
        let (d_patches, grads) = self.inner.backward(&cache.inner, d_inner.view());

        let mut d_x = Array2::zeros((batch, cache.in_features));
        for b in 0..batch {
            for (p, entries) in cache.map.iter().enumerate() {
                for (t, src) in entries.iter().enumerate() {
                    if let Some(s) = src {
                        d_x[[b, *s]] += d_patches[[b * positions + p, t]];
                    }
                }
            }
        }
        (d_x, grads)
    }

    /// Exact eval-mode forward for one sample of flattened features.
    pub fn eval_forward_sample(&self, x: &[f64], in_shape: &[usize]) -> Result<Vec<f64>> {
        let (spatial, _) = in_shape.split_at(in_shape.len() - 1);
        let (_, map) =
            im2col_map(spatial, self.channels_in, &self.kernel, &self.stride, self.padding)?;
        let c_out = self.inner.c_out;
        let mut out = vec![0.0; map.len() * c_out];
        let mut patch = vec![0.0; self.inner.c_in];
        for (p, entries) in map.iter().enumerate() {
            for (t, src) in entries.iter().enumerate() {
                patch[t] = src.map_or(0.0, |s| x[s]);
            }
            let o = self.inner.eval_forward_sample(&patch)?;
            out[p * c_out..(p + 1) * c_out].copy_from_slice(&o);
        }
        Ok(out)
    }
}
